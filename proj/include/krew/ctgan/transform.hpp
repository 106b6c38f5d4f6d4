#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "krew/ctgan/tape.hpp"
#include "krew/encoders.hpp"

namespace krew::ctgan {

enum class SlotKind {
  Continuous,   // alpha + mode indicator group
  Discrete,     // one-hot over the observed values of one column
  OneHotGroup,  // m binary encoded columns read as one m-way category
};

struct ColumnTransform {
  SlotKind kind = SlotKind::Discrete;
  std::string name;
  // Encoded-table columns this transform reads (one, or m for OneHotGroup).
  std::vector<std::size_t> source;

  // Continuous: mixture modes.
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> weights;

  // Discrete: sorted observed values. Category i stands for values[i]
  // (Discrete) or source[i] (OneHotGroup).
  std::vector<double> values;
  // Training-set frequency of each category.
  std::vector<std::size_t> frequencies;

  // Placement in the transformed row and, for discrete kinds, in V.
  std::size_t output_offset = 0;
  std::size_t output_width = 0;
  std::size_t cond_offset = 0;

  bool discrete() const { return kind != SlotKind::Continuous; }
  std::size_t modes() const { return means.size(); }
  std::size_t categories() const { return frequencies.size(); }

  bool operator==(const ColumnTransform&) const = default;
};

struct GmmOptions {
  int max_modes = 10;
  double min_weight = 0.005;
  int max_iterations = 200;
  double tolerance = 1e-8;
};

// One-dimensional Gaussian mixture fitted by EM from a deterministic
// quantile initialization. Modes below min_weight are dropped.
struct Mixture {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> weights;
};
Mixture fit_mixture(const std::vector<double>& x, const GmmOptions& options = {});

class TransformSpec {
 public:
  TransformSpec() = default;
  TransformSpec(std::vector<ColumnTransform> columns, std::size_t encoded_width);

  const std::vector<ColumnTransform>& columns() const { return columns_; }
  std::size_t encoded_width() const { return encoded_width_; }
  // Width of a transformed row.
  std::size_t output_width() const { return output_width_; }
  // Width of the conditional vector V.
  std::size_t cond_width() const { return cond_width_; }
  // Indices into columns() of the discrete transforms, in V order.
  const std::vector<std::size_t>& discrete_columns() const { return discrete_; }

  // Mode-specific normalization and one-hot expansion of every row.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& encoded) const;
  // Per row, per discrete column (discrete_columns() order): category index.
  std::vector<std::vector<int>> categories_of(const Eigen::MatrixXd& encoded) const;
  // Inverse of forward. Groups are read by argmax, alpha is clipped to [-1, 1].
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& transformed) const;

  // Column groups of the transformed row. Alpha slots are singletons.
  const std::shared_ptr<const ad::Segments>& segments() const { return segments_; }
  // 1 x output_width indicators of tanh slots and of softmax slots.
  const std::shared_ptr<const Eigen::MatrixXd>& alpha_mask() const { return alpha_mask_; }
  const std::shared_ptr<const Eigen::MatrixXd>& softmax_mask() const { return softmax_mask_; }

  std::string to_json() const;
  static TransformSpec from_json(const std::string& text);

  bool operator==(const TransformSpec& o) const {
    return columns_ == o.columns_ && encoded_width_ == o.encoded_width_;
  }

 private:
  std::vector<ColumnTransform> columns_;
  std::size_t encoded_width_ = 0;
  std::size_t output_width_ = 0;
  std::size_t cond_width_ = 0;
  std::vector<std::size_t> discrete_;
  std::shared_ptr<const ad::Segments> segments_;
  std::shared_ptr<const Eigen::MatrixXd> alpha_mask_;
  std::shared_ptr<const Eigen::MatrixXd> softmax_mask_;
};

// Continuous passthrough columns get a mixture; categorical, count and
// multi-hot columns become discrete; the m one-hot skillset columns form one
// OneHotGroup.
TransformSpec fit_transforms(const EncodedTable& encoded, const GmmOptions& options = {});

}  // namespace krew::ctgan
