#include "tradi/tracker.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace tradi::tracker {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

void validate_hyper(const TrackerHyper& h) {
  if (!(h.mean_obs_noise > 0.0) || !(h.var_obs_noise > 0.0))
    throw ContractError("observation noises must be positive");
  if (h.mean_state_noise < 0.0 || h.var_state_noise < 0.0)
    throw ContractError("state noises must be non-negative");
  if (!(h.variance_floor > 0.0)) throw ContractError("variance floor must be positive");
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint");
  return v;
}

constexpr std::uint32_t kStateMagic = 0x53445254;   // "TRDS"
constexpr std::uint32_t kWeightsMagic = 0x57445254; // "TRDW"
constexpr std::uint32_t kVersion = 1;

}  // namespace

TrackerState tracker_init(const Vector& init_variance, const TrackerHyper& hyper) {
  validate_hyper(hyper);
  for (Eigen::Index i = 0; i < init_variance.size(); ++i)
    if (!(init_variance[i] > 0.0)) throw ContractError("init variances must be positive");

  TrackerState s;
  s.mu = Vector::Zero(init_variance.size());
  s.sigma2 = init_variance;
  s.p_mean = 0.0;
  s.p_var = 0.0;
  s.step = 0;
  return s;
}

void tracker_step(TrackerState& state, const nn::ParamVector& weights,
                  const nn::ParamVector& grad, double lr, const TrackerHyper& hyper) {
  validate_hyper(hyper);
  const auto k = state.mu.size();
  if (weights.values.size() != k || grad.values.size() != k)
    throw ContractError("tracker state and parameter vectors disagree on K");
  if (!grad.values.allFinite()) throw NumericError("non-finite gradient; tracker step aborted");
  if (!weights.values.allFinite()) throw NumericError("non-finite weights; tracker step aborted");

  const double pm_pred = state.p_mean + hyper.mean_state_noise;
  const double pv_pred = state.p_var + hyper.var_state_noise;
  const double q_mean = pm_pred / (pm_pred + hyper.mean_obs_noise);
  const double q_var = pv_pred / (pv_pred + hyper.var_obs_noise);

  const auto& w = weights.values.array();
  const auto& g = grad.values.array();
  auto mu = state.mu.array();
  auto s2 = state.sigma2.array();

  // mean filter: predict with the SGD step, correct toward omega(t)
  mu = (1.0 - q_mean) * (mu - lr * g) + q_mean * w;

  // variance filter: the state increment uses the just-updated mean
  Eigen::ArrayXd increment;
  if (hyper.variance_update == VarianceUpdate::centered)
    increment = (lr * (g - mu)).square();
  else
    increment = (lr * g).square();
  s2 = (1.0 - q_var) * (s2 + increment) + q_var * (w.square() - mu.square());
  s2 = s2.max(hyper.variance_floor);

  state.p_mean = (1.0 - q_mean) * pm_pred;
  state.p_var = (1.0 - q_var) * pv_pred;
  ++state.step;
}

void save_checkpoint(const TrackerState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_raw(out, kStateMagic);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(state.mu.size()));
  write_raw(out, state.step);
  write_raw(out, state.p_mean);
  write_raw(out, state.p_var);
  out.write(reinterpret_cast<const char*>(state.mu.data()),
            static_cast<std::streamsize>(sizeof(double)) * state.mu.size());
  out.write(reinterpret_cast<const char*>(state.sigma2.data()),
            static_cast<std::streamsize>(sizeof(double)) * state.sigma2.size());
  if (!out) throw IoError("write failed: " + path);
}

TrackerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (read_raw<std::uint32_t>(in) != kStateMagic) throw FormatError("bad checkpoint magic");
  if (read_raw<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
  const auto k = static_cast<Eigen::Index>(read_raw<std::uint64_t>(in));
  TrackerState s;
  s.step = read_raw<std::uint64_t>(in);
  s.p_mean = read_raw<double>(in);
  s.p_var = read_raw<double>(in);
  s.mu = Vector(k);
  s.sigma2 = Vector(k);
  in.read(reinterpret_cast<char*>(s.mu.data()), static_cast<std::streamsize>(sizeof(double)) * k);
  in.read(reinterpret_cast<char*>(s.sigma2.data()),
          static_cast<std::streamsize>(sizeof(double)) * k);
  if (!in) throw FormatError("truncated checkpoint");
  return s;
}

void save_weights(const Vector& values, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_raw(out, kWeightsMagic);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(values.size()));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(sizeof(double)) * values.size());
  if (!out) throw IoError("write failed: " + path);
}

Vector load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (read_raw<std::uint32_t>(in) != kWeightsMagic) throw FormatError("bad weights magic");
  if (read_raw<std::uint32_t>(in) != kVersion) throw FormatError("unsupported weights version");
  const auto k = static_cast<Eigen::Index>(read_raw<std::uint64_t>(in));
  Vector v(k);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double)) * k);
  if (!in) throw FormatError("truncated weights file");
  return v;
}

LayerCovariance cov_tracker_init(const Vector& init_variance,
                                 const std::vector<nn::ParamSlice>& layout,
                                 int layer_size_limit) {
  // group contiguous slices by their owning layer
  std::map<int, std::pair<std::size_t, std::size_t>> span;  // layer -> [begin, end)
  for (const auto& s : layout) {
    auto it = span.find(s.layer);
    if (it == span.end())
      span[s.layer] = {s.offset, s.offset + s.length};
    else {
      it->second.first = std::min(it->second.first, s.offset);
      it->second.second = std::max(it->second.second, s.offset + s.length);
    }
  }

  LayerCovariance cov;
  cov.layer_size_limit = layer_size_limit;
  for (const auto& [layer, range] : span) {
    const auto len = range.second - range.first;
    if (len > static_cast<std::size_t>(layer_size_limit))
      throw ConfigError("layer " + std::to_string(layer) + " has " + std::to_string(len) +
                        " weights, above the exact-covariance limit of " +
                        std::to_string(layer_size_limit) + "; use the low-rank sampling mode");
    Matrix block = Matrix::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len));
    block.diagonal() =
        init_variance.segment(static_cast<Eigen::Index>(range.first), static_cast<Eigen::Index>(len));
    cov.blocks.push_back(std::move(block));
    cov.block_offset.push_back(range.first);
  }
  return cov;
}

void cov_tracker_step(LayerCovariance& cov, const nn::ParamVector& weights,
                      const nn::ParamVector& grad, const Vector& mu, double lr,
                      const TrackerHyper& hyper) {
  validate_hyper(hyper);
  if (!grad.values.allFinite()) throw NumericError("non-finite gradient; tracker step aborted");

  const double p_pred = cov.p_cov + hyper.var_state_noise;
  const double q = p_pred / (p_pred + hyper.var_obs_noise);

  for (std::size_t b = 0; b < cov.blocks.size(); ++b) {
    Matrix& sigma = cov.blocks[b];
    const auto off = static_cast<Eigen::Index>(cov.block_offset[b]);
    const auto len = sigma.rows();
    const Vector w = weights.values.segment(off, len);
    const Vector g = grad.values.segment(off, len);
    const Vector m = mu.segment(off, len);

    Matrix increment;
    if (hyper.variance_update == VarianceUpdate::centered) {
      const Vector c = lr * (g - m);
      increment.noalias() = c * c.transpose();
    } else {
      increment.noalias() = (lr * lr) * (g * g.transpose());
      increment.noalias() -= (lr * lr) * (m * m.transpose());
    }
    Matrix target;
    target.noalias() = w * w.transpose();
    target.noalias() -= m * m.transpose();

    sigma = (1.0 - q) * (sigma + increment) + q * target;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }
  cov.p_cov = (1.0 - q) * p_pred;
}

}  // namespace tradi::tracker
