#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace difr {

struct ProjectionConfig {
  std::uint64_t projection_seed = 0;
  std::size_t k = 32;       // projected dimension
  std::size_t d = 64;       // activation dimension
  std::size_t stride = 1;   // fingerprint every stride-th position

  friend bool operator==(const ProjectionConfig&, const ProjectionConfig&) = default;
  void validate() const;
};

/// Row-orthonormal k x d matrix built by modified Gram-Schmidt (two passes)
/// over Gaussian rows drawn from the projection noise stream. Row i depends
/// only on rows 0..i, so the first k' rows of a k-row projection equal the
/// k'-row projection with the same seed.
class Projection {
 public:
  explicit Projection(const ProjectionConfig& config);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const ProjectionConfig& config() const { return config_; }
  std::span<const double> row(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  /// P a in double precision.
  std::vector<double> apply(std::span<const double> activation) const;

 private:
  ProjectionConfig config_;
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Throws std::invalid_argument when k > d.
Projection make_projection(const ProjectionConfig& config);

/// A transmitted fingerprint. Values are stored at the precision they travel
/// in (32-bit floats).
struct Fingerprint {
  std::size_t position = 0;
  std::vector<float> values;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

Fingerprint collect_fingerprint(std::span<const double> activation, const Projection& projection,
                                std::size_t position = 0);

/// Euclidean distance; throws std::invalid_argument on k or position mismatch.
double match_fingerprint(const Fingerprint& f, const Fingerprint& f_hat);

/// Distance using only the first k values of each fingerprint.
double prefix_distance(const Fingerprint& f, const Fingerprint& f_hat, std::size_t k);

/// sqrt(d / k) * distance, the JL-corrected estimate of the full distance.
double jl_corrected_distance(double projected_distance, std::size_t k, std::size_t d);

/// Positions 0, J, 2J, ... below length.
std::vector<std::size_t> fingerprint_positions(std::size_t length, std::size_t stride);

}  // namespace difr
