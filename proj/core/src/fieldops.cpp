#include "nefnet/fieldops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

// Two-point linear interpolation tap into a grid of n samples.
struct Tap {
  int lo;
  int hi;
  double w_lo;
  double w_hi;
};

Tap tap_at(double position, int n) {
  const double p = std::clamp(position, 0.0, static_cast<double>(n - 1));
  const int lo = static_cast<int>(std::floor(p));
  if (lo >= n - 1) return {n - 1, n - 1, 1.0, 0.0};
  const double w = p - lo;
  return {lo, lo + 1, 1.0 - w, w};
}

void require_span(Span span) {
  if (!(span.end > span.begin)) {
    throw Error(ErrorKind::kEmptySpan, "empty span [" + std::to_string(span.begin) + ", " +
                                           std::to_string(span.end) + ")");
  }
}

Tap pool_tap(Span span, int bins, int bin, int grid) {
  const double coord = span.begin + (bin + 0.5) * span.width() / bins;
  return tap_at(coord - 0.5, grid);
}

Tap unpool_tap(Span span, int bins, int column) {
  const double centre = column + 0.5;
  return tap_at((centre - span.begin) / span.width() * bins - 0.5, bins);
}

bool covers(Span span, int column) {
  const double centre = column + 0.5;
  return centre >= span.begin && centre < span.end;
}

}  // namespace

std::array<Span, kNumDeflections> DeflectionSpans::all() const {
  std::array<Span, kNumDeflections> spans{};
  for (int i = 0; i < kNumDeflections; ++i) spans[i] = span(i);
  return spans;
}

DeflectionSpans map_demarcations(const Demarcations& d, int signal_length, int feature_length) {
  DeflectionSpans spans;
  spans.signal_length = signal_length;
  spans.feature_length = feature_length;
  const double scale = static_cast<double>(feature_length) / signal_length;
  for (int i = 0; i < kNumDemarcations; ++i) spans.tau[i] = scale * d[i];
  spans.tau.front() = 0.0;
  spans.tau.back() = feature_length;
  return spans;
}

DeflectionSpans spans_from_lengths(const DeflectionLengths& lengths, int feature_length) {
  const Demarcations d = demarcations_from_lengths(lengths);
  return map_demarcations(d, d.back(), feature_length);
}

RowMatrix roi_align_1d(const ConstMatrixRef& features, Span span, int bins) {
  require_span(span);
  if (bins < 1) throw Error(ErrorKind::kInvalidArgument, "roi_align_1d needs bins >= 1");
  const int grid = static_cast<int>(features.cols());
  RowMatrix pooled(features.rows(), bins);
  for (int k = 0; k < bins; ++k) {
    const Tap tap = pool_tap(span, bins, k, grid);
    pooled.col(k) = tap.w_lo * features.col(tap.lo) + tap.w_hi * features.col(tap.hi);
  }
  return pooled;
}

void roi_align_1d_backward(const ConstMatrixRef& grad_pooled, Span span, MatrixRef grad_features) {
  require_span(span);
  const int bins = static_cast<int>(grad_pooled.cols());
  const int grid = static_cast<int>(grad_features.cols());
  for (int k = 0; k < bins; ++k) {
    const Tap tap = pool_tap(span, bins, k, grid);
    grad_features.col(tap.lo) += tap.w_lo * grad_pooled.col(k);
    grad_features.col(tap.hi) += tap.w_hi * grad_pooled.col(k);
  }
}

void reverse_roi_align_1d(const ConstMatrixRef& rep, Span span, MatrixRef out) {
  require_span(span);
  const int bins = static_cast<int>(rep.cols());
  for (int j = 0; j < out.cols(); ++j) {
    if (!covers(span, j)) continue;
    const Tap tap = unpool_tap(span, bins, j);
    out.col(j) = tap.w_lo * rep.col(tap.lo) + tap.w_hi * rep.col(tap.hi);
  }
}

void reverse_roi_align_1d_backward(const ConstMatrixRef& grad_out, Span span, MatrixRef grad_rep) {
  require_span(span);
  const int bins = static_cast<int>(grad_rep.cols());
  for (int j = 0; j < grad_out.cols(); ++j) {
    if (!covers(span, j)) continue;
    const Tap tap = unpool_tap(span, bins, j);
    grad_rep.col(tap.lo) += tap.w_lo * grad_out.col(j);
    grad_rep.col(tap.hi) += tap.w_hi * grad_out.col(j);
  }
}

void check_tiling(std::span<const Span> spans, int feature_length) {
  if (spans.empty()) throw Error(ErrorKind::kTiling, "no spans to tile");
  for (const Span& s : spans) require_span(s);
  if (spans.front().begin != 0.0) {
    throw Error(ErrorKind::kTiling, "first span starts at " + std::to_string(spans.front().begin));
  }
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].begin != spans[i - 1].end) {
      throw Error(ErrorKind::kTiling, "spans " + std::to_string(i - 1) + " and " +
                                          std::to_string(i) + " leave a gap or overlap");
    }
  }
  if (spans.back().end != static_cast<double>(feature_length)) {
    throw Error(ErrorKind::kTiling, "last span ends at " + std::to_string(spans.back().end) +
                                        ", expected " + std::to_string(feature_length));
  }
}

RowMatrix reverse_roi_align_tiled(std::span<const RowMatrix> reps, std::span<const Span> spans,
                                  int feature_length) {
  if (reps.size() != spans.size() || reps.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "one representation per span is required");
  }
  check_tiling(spans, feature_length);
  RowMatrix out = RowMatrix::Zero(reps.front().rows(), feature_length);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].rows() != out.rows()) {
      throw Error(ErrorKind::kShapeMismatch, "representations disagree on channel count");
    }
    reverse_roi_align_1d(reps[i], spans[i], out);
  }
  return out;
}

}  // namespace nef
