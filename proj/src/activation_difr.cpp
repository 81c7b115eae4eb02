#include "difr/activation_difr.hpp"

#include <cmath>
#include <stdexcept>

#include "difr/noise.hpp"

namespace difr {

void ProjectionConfig::validate() const {
  if (d == 0) throw std::invalid_argument("projection: d must be >= 1");
  if (k == 0) throw std::invalid_argument("projection: k must be >= 1");
  if (k > d) throw std::invalid_argument("projection: k must not exceed d");
  if (stride == 0) throw std::invalid_argument("projection: stride must be >= 1");
}

Projection::Projection(const ProjectionConfig& config)
    : config_(config), rows_(config.k), cols_(config.d) {
  config_.validate();
  data_.assign(rows_ * cols_, 0.0);
  std::vector<double> v(cols_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      v[j] = noise::gaussian_draw({config.projection_seed, noise::Stream::projection, i, j});
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t r = 0; r < i; ++r) {
        const double* q = &data_[r * cols_];
        double dot = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) dot += v[j] * q[j];
        for (std::size_t j = 0; j < cols_; ++j) v[j] -= dot * q[j];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw std::runtime_error("projection: degenerate Gaussian row");
    for (std::size_t j = 0; j < cols_; ++j) data_[i * cols_ + j] = v[j] / norm;
  }
}

std::span<const double> Projection::row(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * cols_, cols_);
}

std::vector<double> Projection::apply(std::span<const double> activation) const {
  if (activation.size() != cols_) {
    throw std::invalid_argument("projection: activation length differs from d");
  }
  std::vector<double> out(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* p = &data_[i * cols_];
    double acc = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) acc += p[j] * activation[j];
    out[i] = acc;
  }
  return out;
}

Projection make_projection(const ProjectionConfig& config) { return Projection(config); }

Fingerprint collect_fingerprint(std::span<const double> activation, const Projection& projection,
                                std::size_t position) {
  const auto projected = projection.apply(activation);
  Fingerprint f;
  f.position = position;
  f.values.assign(projected.begin(), projected.end());
  return f;
}

double prefix_distance(const Fingerprint& f, const Fingerprint& f_hat, std::size_t k) {
  if (f.position != f_hat.position) throw std::invalid_argument("fingerprint: position mismatch");
  if (k > f.values.size() || k > f_hat.values.size()) {
    throw std::invalid_argument("fingerprint: prefix longer than fingerprint");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double diff = static_cast<double>(f.values[i]) - static_cast<double>(f_hat.values[i]);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

double match_fingerprint(const Fingerprint& f, const Fingerprint& f_hat) {
  if (f.values.size() != f_hat.values.size()) {
    throw std::invalid_argument("fingerprint: dimension mismatch");
  }
  return prefix_distance(f, f_hat, f.values.size());
}

double jl_corrected_distance(double projected_distance, std::size_t k, std::size_t d) {
  if (k == 0 || k > d) throw std::invalid_argument("jl_corrected_distance: need 1 <= k <= d");
  return std::sqrt(static_cast<double>(d) / static_cast<double>(k)) * projected_distance;
}

std::vector<std::size_t> fingerprint_positions(std::size_t length, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("fingerprint_positions: stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < length; p += stride) out.push_back(p);
  return out;
}

}  // namespace difr
