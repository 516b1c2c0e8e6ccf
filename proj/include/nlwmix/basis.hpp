#pragma once

// Dirichlet Laplacian eigenbasis on the box (0, pi)^d.
//
// Modes are products of normalized sines e_k(x) = prod_a sqrt(2/pi) sin(k_a x_a)
// with eigenvalue |k|^2, ordered by eigenvalue and then lexicographically by
// the index tuple. Nodal fields live on the interior grid of G = 2*M_ax + 1
// points per axis, x_i = (i+1) pi / (G+1). On that grid the sines of order
// <= G are discretely orthonormal, so the modal -> nodal -> modal round trip
// is exact and products of up to three band-limited fields are projected
// without aliasing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nlwmix/errors.hpp"

namespace nlwmix {

using ModalCoeffs = std::vector<double>;
using NodalField = std::vector<double>;
using ModeIndex = std::array<int, 3>;

class Basis {
 public:
  Basis(int dim, int modes_per_axis) : dim_(dim), modes_per_axis_(modes_per_axis) {
    if (dim < 1 || dim > 3) {
      throw ConfigError("basis dimension must be 1, 2 or 3, got " + std::to_string(dim));
    }
    if (modes_per_axis < 1) {
      throw ConfigError("basis needs at least one mode per axis");
    }
    grid_per_axis_ = 2 * modes_per_axis_ + 1;

    std::size_t count = 1;
    for (int a = 0; a < dim_; ++a) count *= static_cast<std::size_t>(modes_per_axis_);
    std::vector<ModeIndex> tuples(count, ModeIndex{0, 0, 0});
    for (std::size_t flat = 0; flat < count; ++flat) {
      std::size_t rest = flat;
      for (int a = dim_ - 1; a >= 0; --a) {
        tuples[flat][a] = static_cast<int>(rest % modes_per_axis_) + 1;
        rest /= modes_per_axis_;
      }
    }
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto eigen = [](const ModeIndex& k) { return k[0] * k[0] + k[1] * k[1] + k[2] * k[2]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return eigen(tuples[a]) < eigen(tuples[b]);
    });

    modes_.reserve(count);
    tensor_slot_.reserve(count);
    eigenvalues_.reserve(count);
    for (std::size_t j : order) {
      modes_.push_back(tuples[j]);
      tensor_slot_.push_back(j);
      eigenvalues_.push_back(static_cast<double>(eigen(tuples[j])));
    }

    const double h = std::numbers::pi / static_cast<double>(grid_per_axis_ + 1);
    nodes_.resize(grid_per_axis_);
    for (int i = 0; i < grid_per_axis_; ++i) nodes_[i] = (i + 1) * h;
    axis_weight_ = h;

    const double norm = std::sqrt(2.0 / std::numbers::pi);
    synthesis_.resize(static_cast<std::size_t>(grid_per_axis_) * modes_per_axis_);
    analysis_.resize(synthesis_.size());
    for (int i = 0; i < grid_per_axis_; ++i) {
      for (int m = 0; m < modes_per_axis_; ++m) {
        const double value = norm * std::sin((m + 1) * nodes_[i]);
        synthesis_[static_cast<std::size_t>(i) * modes_per_axis_ + m] = value;
        analysis_[static_cast<std::size_t>(m) * grid_per_axis_ + i] = axis_weight_ * value;
      }
    }
    synthesis_cols_.resize(synthesis_.size());
    analysis_cols_.resize(analysis_.size());
    for (int i = 0; i < grid_per_axis_; ++i) {
      for (int m = 0; m < modes_per_axis_; ++m) {
        synthesis_cols_[static_cast<std::size_t>(m) * grid_per_axis_ + i] =
            synthesis_[static_cast<std::size_t>(i) * modes_per_axis_ + m];
        analysis_cols_[static_cast<std::size_t>(i) * modes_per_axis_ + m] =
            analysis_[static_cast<std::size_t>(m) * grid_per_axis_ + i];
      }
    }
  }

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] int modes_per_axis() const noexcept { return modes_per_axis_; }
  [[nodiscard]] std::size_t size() const noexcept { return modes_.size(); }
  [[nodiscard]] std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
  [[nodiscard]] double eigenvalue(std::size_t j) const { return eigenvalues_.at(j); }
  [[nodiscard]] const ModeIndex& mode_index(std::size_t j) const { return modes_.at(j); }

  [[nodiscard]] int grid_per_axis() const noexcept { return grid_per_axis_; }
  [[nodiscard]] std::size_t node_count() const noexcept {
    std::size_t n = 1;
    for (int a = 0; a < dim_; ++a) n *= static_cast<std::size_t>(grid_per_axis_);
    return n;
  }
  [[nodiscard]] std::span<const double> axis_nodes() const noexcept { return nodes_; }
  /// Coordinates of nodal point `flat` (row-major, axis 0 slowest).
  [[nodiscard]] std::array<double, 3> node(std::size_t flat) const {
    std::array<double, 3> x{0.0, 0.0, 0.0};
    for (int a = dim_ - 1; a >= 0; --a) {
      x[a] = nodes_[flat % grid_per_axis_];
      flat /= grid_per_axis_;
    }
    return x;
  }
  /// Quadrature weight of every node (uniform interior rule).
  [[nodiscard]] double node_weight() const noexcept { return std::pow(axis_weight_, dim_); }
  [[nodiscard]] double volume() const noexcept { return std::pow(std::numbers::pi, dim_); }

  void to_nodal(std::span<const double> coeffs, std::span<double> field) const {
    if (coeffs.size() != size()) throw ShapeError("to_nodal: coefficient length mismatch");
    if (field.size() != node_count()) throw ShapeError("to_nodal: field length mismatch");
    const std::size_t nm = static_cast<std::size_t>(modes_per_axis_);
    const std::size_t ng = static_cast<std::size_t>(grid_per_axis_);
    if (dim_ == 1) {
      // Column sweeps vectorize without reassociating sums.
      double* out = field.data();
      std::fill(field.begin(), field.end(), 0.0);
      for (std::size_t m = 0; m < nm; ++m) {
        const double* col = synthesis_cols_.data() + m * ng;
        const double c = coeffs[m];
        for (std::size_t i = 0; i < ng; ++i) out[i] += c * col[i];
      }
      return;
    }
    std::vector<double> tensor(tensor_size(nm), 0.0);
    for (std::size_t j = 0; j < size(); ++j) tensor[tensor_slot_[j]] = coeffs[j];
    std::array<std::size_t, 3> shape{1, 1, 1};
    for (int a = 0; a < dim_; ++a) shape[a] = nm;
    for (int a = 0; a < dim_; ++a) {
      tensor = apply_axis(tensor, shape, a, synthesis_, ng);
      shape[a] = ng;
    }
    std::copy(tensor.begin(), tensor.end(), field.begin());
  }

  [[nodiscard]] NodalField to_nodal(std::span<const double> coeffs) const {
    NodalField field(node_count());
    to_nodal(coeffs, field);
    return field;
  }

  void to_modal(std::span<const double> field, std::span<double> coeffs) const {
    if (field.size() != node_count()) throw ShapeError("to_modal: field is not sampled on the basis grid");
    if (coeffs.size() != size()) throw ShapeError("to_modal: coefficient length mismatch");
    const std::size_t nm = static_cast<std::size_t>(modes_per_axis_);
    const std::size_t ng = static_cast<std::size_t>(grid_per_axis_);
    if (dim_ == 1) {
      double* out = coeffs.data();
      std::fill(coeffs.begin(), coeffs.end(), 0.0);
      for (std::size_t i = 0; i < ng; ++i) {
        const double* col = analysis_cols_.data() + i * nm;
        const double x = field[i];
        for (std::size_t m = 0; m < nm; ++m) out[m] += x * col[m];
      }
      return;
    }
    std::vector<double> tensor(field.begin(), field.end());
    std::array<std::size_t, 3> shape{1, 1, 1};
    for (int a = 0; a < dim_; ++a) shape[a] = ng;
    for (int a = 0; a < dim_; ++a) {
      tensor = apply_axis(tensor, shape, a, analysis_, nm);
      shape[a] = nm;
    }
    for (std::size_t j = 0; j < size(); ++j) coeffs[j] = tensor[tensor_slot_[j]];
  }

  [[nodiscard]] ModalCoeffs to_modal(std::span<const double> field) const {
    ModalCoeffs coeffs(size());
    to_modal(field, coeffs);
    return coeffs;
  }

  /// Discrete L2(D) norm of a nodal field.
  [[nodiscard]] double nodal_l2(std::span<const double> field) const {
    double acc = 0.0;
    for (double x : field) acc += x * x;
    return std::sqrt(acc * node_weight());
  }

 private:
  [[nodiscard]] std::size_t tensor_size(std::size_t n) const {
    std::size_t s = 1;
    for (int a = 0; a < dim_; ++a) s *= n;
    return s;
  }

  // Contract axis `axis` of a row-major tensor with a (rows x shape[axis]) matrix.
  static std::vector<double> apply_axis(const std::vector<double>& in,
                                        const std::array<std::size_t, 3>& shape, int axis,
                                        const std::vector<double>& matrix, std::size_t rows) {
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (int a = 0; a < axis; ++a) outer *= shape[a];
    for (int a = axis + 1; a < 3; ++a) inner *= shape[a];
    const std::size_t cols = shape[axis];
    std::vector<double> out(outer * rows * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = out.data() + (o * rows + r) * inner;
        for (std::size_t c = 0; c < cols; ++c) {
          const double w = matrix[r * cols + c];
          const double* src = in.data() + (o * cols + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
        }
      }
    }
    return out;
  }

  int dim_;
  int modes_per_axis_;
  int grid_per_axis_ = 0;
  std::vector<ModeIndex> modes_;
  std::vector<std::size_t> tensor_slot_;
  std::vector<double> eigenvalues_;
  std::vector<double> nodes_;
  double axis_weight_ = 0.0;
  std::vector<double> synthesis_;  // G x M_ax
  std::vector<double> analysis_;   // M_ax x G, quadrature weight folded in
  std::vector<double> synthesis_cols_;  // transposed copies for the 1-D sweeps
  std::vector<double> analysis_cols_;
};

}  // namespace nlwmix
