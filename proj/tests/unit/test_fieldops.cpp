#include <doctest.h>

#include <random>

#include "nefnet/autodiff.hpp"
#include "nefnet/errors.hpp"
#include "nefnet/fieldops.hpp"
#include "support/oracles.hpp"

using namespace nef;

namespace {

RowMatrix random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n(0, 1);
  RowMatrix m(rows, cols);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Span random_span(std::mt19937_64& rng, int grid) {
  std::uniform_real_distribution<double> u(0, grid);
  double a = u(rng), b = u(rng);
  if (a > b) std::swap(a, b);
  if (b - a < 1e-3) b = a + 1e-3;
  return {a, b};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_SUITE("fieldops") {
  TEST_CASE("map_demarcations") {
    auto spans = map_demarcations({0, 50, 90, 200, 260, 420, 500}, 500, 125);
    CHECK(spans.tau == std::array<double, 7>{0, 12.5, 22.5, 50, 65, 105, 125});
    spans = map_demarcations({0, 64, 96, 192, 256, 448, 512}, 512, 32);
    CHECK(spans.tau == std::array<double, 7>{0, 4, 6, 12, 16, 28, 32});
    const Demarcations d{0, 13, 77, 130, 210, 400, 512};
    spans = map_demarcations(d, 512, 512);
    for (int i = 0; i < 7; ++i) CHECK(spans.tau[i] == d[i]);
    const auto from_lengths = spans_from_lengths(deflection_lengths(d), 32);
    CHECK(from_lengths.tau == map_demarcations(d, 512, 32).tau);
  }

  TEST_CASE("roi_align examples") {
    RowMatrix constant = RowMatrix::Constant(3, 16, 5.0);
    const RowMatrix pooled = roi_align_1d(constant, {2.3, 9.1}, 5);
    CHECK(pooled.rows() == 3);
    CHECK(pooled.cols() == 5);
    CHECK((pooled.array() == 5.0).all());

    RowMatrix ramp(1, 16);
    for (int i = 0; i < 16; ++i) ramp(0, i) = i;
    const RowMatrix two = roi_align_1d(ramp, {0, 10}, 2);
    CHECK(two(0, 0) == doctest::Approx(2.0));
    CHECK(two(0, 1) == doctest::Approx(7.0));

    CHECK(kind_of([&] { roi_align_1d(ramp, {3, 3}, 2); }) == ErrorKind::kEmptySpan);
  }

  TEST_CASE("roi_align matches the brute-force oracle") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 300; ++t) {
      const int grid = std::uniform_int_distribution<int>(2, 40)(rng);
      const int bins = std::uniform_int_distribution<int>(1, 12)(rng);
      const RowMatrix f = random_matrix(rng, 2, grid);
      const Span s = random_span(rng, grid);
      const RowMatrix got = roi_align_1d(f, s, bins);
      for (int c = 0; c < 2; ++c) {
        const std::vector<double> row(f.row(c).data(), f.row(c).data() + grid);
        const auto want = oracle::roi_pool(row, s.begin, s.end, bins);
        for (int k = 0; k < bins; ++k) REQUIRE(std::abs(got(c, k) - want[k]) < 1e-12);
      }
    }
  }

  TEST_CASE("both directions are linear") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 100; ++t) {
      const int grid = 32, bins = 8;
      const Span s = random_span(rng, grid);
      const double a = u(rng), b = u(rng);
      const RowMatrix f = random_matrix(rng, 3, grid), g = random_matrix(rng, 3, grid);
      const RowMatrix lhs = roi_align_1d(a * f + b * g, s, bins);
      const RowMatrix rhs = a * roi_align_1d(f, s, bins) + b * roi_align_1d(g, s, bins);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);

      const RowMatrix r1 = random_matrix(rng, 3, bins), r2 = random_matrix(rng, 3, bins);
      RowMatrix o1 = RowMatrix::Zero(3, grid), o2 = o1, o12 = o1;
      reverse_roi_align_1d(r1, s, o1);
      reverse_roi_align_1d(r2, s, o2);
      reverse_roi_align_1d(a * r1 + b * r2, s, o12);
      CHECK((o12 - (a * o1 + b * o2)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("reverse fills only the covered columns") {
    RowMatrix rep = RowMatrix::Constant(2, 8, 3.0);
    RowMatrix out = RowMatrix::Constant(2, 32, -1.0);
    reverse_roi_align_1d(rep, {4.2, 9.7}, out);
    for (int j = 0; j < 32; ++j) {
      const double centre = j + 0.5;
      const bool covered = centre >= 4.2 && centre < 9.7;
      CHECK(out(0, j) == (covered ? 3.0 : -1.0));
    }
  }

  TEST_CASE("linear features survive the round trip") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int t = 0; t < 200; ++t) {
      const int grid = 32;
      const double slope = u(rng), offset = u(rng);
      RowMatrix f(1, grid);
      for (int i = 0; i < grid; ++i) f(0, i) = offset + slope * (i + 0.5);
      std::uniform_real_distribution<double> start(1, 19), width(4, 12);
      const double a = start(rng);
      const Span s{a, std::min<double>(grid - 1, a + width(rng))};
      const RowMatrix pooled = roi_align_1d(f, s, 8);
      RowMatrix out = RowMatrix::Zero(1, grid);
      reverse_roi_align_1d(pooled, s, out);
      // interior: centres between the first and last bin sample points
      const double first = s.begin + 0.5 * s.width() / 8;
      const double last = s.begin + 7.5 * s.width() / 8;
      for (int j = 0; j < grid; ++j) {
        const double c = j + 0.5;
        if (c >= first && c <= last && c >= 0.5 && c <= grid - 0.5) {
          REQUIRE(std::abs(out(0, j) - f(0, j)) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("tiling") {
    const std::array<Span, 2> ok{Span{0, 4}, Span{4, 32}};
    CHECK_NOTHROW(check_tiling(ok, 32));
    const std::array<Span, 2> gap{Span{0, 4}, Span{5, 32}};
    CHECK(kind_of([&] { check_tiling(gap, 32); }) == ErrorKind::kTiling);
    const std::array<Span, 2> overlap{Span{0, 5}, Span{4, 32}};
    CHECK(kind_of([&] { check_tiling(overlap, 32); }) == ErrorKind::kTiling);
    const std::array<Span, 2> short_end{Span{0, 4}, Span{4, 31}};
    CHECK(kind_of([&] { check_tiling(short_end, 32); }) == ErrorKind::kTiling);
    const std::array<Span, 2> empty{Span{0, 0}, Span{0, 32}};
    CHECK(kind_of([&] { check_tiling(empty, 32); }) == ErrorKind::kEmptySpan);

    const auto spans = map_demarcations({0, 60, 75, 130, 190, 330, 512}, 512, 32).all();
    std::vector<RowMatrix> reps;
    for (int i = 0; i < 6; ++i) reps.push_back(RowMatrix::Constant(2, 8, i));
    const RowMatrix tiled = reverse_roi_align_tiled(reps, spans, 32);
    for (int j = 0; j < 32; ++j) {
      int owner = 0;
      while (!(j + 0.5 < spans[owner].end)) ++owner;
      CHECK(tiled(0, j) == owner);
    }
  }

  TEST_CASE("input gradients match finite differences") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
      const int grid = 16, bins = 5;
      const Span s = random_span(rng, grid);
      const RowMatrix f = random_matrix(rng, 2, grid);
      const RowMatrix w = random_matrix(rng, 2, bins);  // loss = sum(w .* pool(f))

      RowMatrix analytic = RowMatrix::Zero(2, grid);
      roi_align_1d_backward(w, s, analytic);
      for (int i = 0; i < f.size(); ++i) {
        const double numeric = oracle::central_difference(
            [&](double x) {
              RowMatrix g = f;
              g.data()[i] = x;
              return (roi_align_1d(g, s, bins).array() * w.array()).sum();
            },
            f.data()[i]);
        CHECK(oracle::relative_error(analytic.data()[i], numeric, 1e-6) < 1e-3);
      }

      const RowMatrix rep = random_matrix(rng, 2, bins);
      const RowMatrix v = random_matrix(rng, 2, grid);  // loss = sum(v .* reverse(rep))
      RowMatrix rep_grad = RowMatrix::Zero(2, bins);
      reverse_roi_align_1d_backward(v, s, rep_grad);
      for (int i = 0; i < rep.size(); ++i) {
        const double numeric = oracle::central_difference(
            [&](double x) {
              RowMatrix r = rep;
              r.data()[i] = x;
              RowMatrix out = RowMatrix::Zero(2, grid);
              reverse_roi_align_1d(r, s, out);
              return (out.array() * v.array()).sum();
            },
            rep.data()[i]);
        CHECK(oracle::relative_error(rep_grad.data()[i], numeric, 1e-6) < 1e-3);
      }
    }
  }
}
