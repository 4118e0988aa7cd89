#pragma once

#include <array>
#include <span>

#include <Eigen/Core>

#include "nefnet/ecg_data.hpp"

namespace nef {

/// Channels x time, row-major so each channel is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixRef = Eigen::Ref<const RowMatrix>;
using MatrixRef = Eigen::Ref<RowMatrix>;

/// Half-open interval [begin, end) on the feature grid. Grid value i sits
/// at coordinate i + 0.5.
struct Span {
  double begin = 0.0;
  double end = 0.0;

  double width() const { return end - begin; }
};

/// tau_i = (T_w / T_x) * D_i, kept exact.
struct DeflectionSpans {
  std::array<double, kNumDemarcations> tau{};
  int feature_length = 0;
  int signal_length = 0;

  Span span(int deflection) const { return {tau[deflection], tau[deflection + 1]}; }
  std::array<Span, kNumDeflections> all() const;
};

DeflectionSpans map_demarcations(const Demarcations& d, int signal_length, int feature_length);
DeflectionSpans spans_from_lengths(const DeflectionLengths& lengths, int feature_length);

/// Pools features[:, span] onto `bins` columns. Bin k reads the feature at
/// begin + (k + 0.5) * width / bins by linear interpolation, clamped to the
/// grid.
RowMatrix roi_align_1d(const ConstMatrixRef& features, Span span, int bins);

/// Adjoint of roi_align_1d: accumulates into grad_features.
void roi_align_1d_backward(const ConstMatrixRef& grad_pooled, Span span, MatrixRef grad_features);

/// Writes every column of `out` whose centre lies in the span by
/// interpolating `rep` as samples at roi_align_1d's bin centres; clamps
/// outside the first/last bin centre.
void reverse_roi_align_1d(const ConstMatrixRef& rep, Span span, MatrixRef out);

/// Adjoint of reverse_roi_align_1d: accumulates into grad_rep.
void reverse_roi_align_1d_backward(const ConstMatrixRef& grad_out, Span span, MatrixRef grad_rep);

/// Throws kEmptySpan for an empty span and kTiling unless the spans tile
/// [0, feature_length) in order without gap or overlap.
void check_tiling(std::span<const Span> spans, int feature_length);

/// Assembles one channels x feature_length matrix from per-span
/// representations (Eq. reROI applied to every deflection).
RowMatrix reverse_roi_align_tiled(std::span<const RowMatrix> reps, std::span<const Span> spans,
                                  int feature_length);

}  // namespace nef
