#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nefnet/dipole.hpp"
#include "nefnet/errors.hpp"
#include "nefnet/metrics.hpp"
#include "nefnet/training.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace nef;
using std::numbers::pi;

namespace {

std::vector<MultiViewCycle> oracle_data(int n, int length, std::uint64_t seed = 11) {
  DipoleDatasetOptions o;
  o.n_cycles = n;
  o.views = standard_leads(std::vector<std::string>{"II", "aVL", "V1", "I", "V4", "V3"});
  o.noise_std = 0.01;
  o.seed = seed;
  o.length = length;
  return generate_dipole_dataset(o);
}

const ViewGroupSplit kSplit{{"II", "aVL", "V1"}, {"I", "V4"}, {"V3"}};

std::vector<ElectrocardioField> per_view_fields(const NefNet& net, const MultiViewCycle& c, int n) {
  std::vector<ElectrocardioField> out;
  for (int i = 0; i < n; ++i) out.push_back(net.encode_view(c.views[i].cycle, c.views[i].viewpoint));
  return out;
}

double mae(const std::vector<double>& a, const std::vector<double>& b) { return oracle::mae(a, b); }

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("learning-rate schedule") {
    const TrainConfig cfg;
    CHECK(lr_at_epoch(cfg, 1) == doctest::Approx(0.1));
    CHECK(lr_at_epoch(cfg, 49) == doctest::Approx(0.1));
    CHECK(lr_at_epoch(cfg, 50) == doctest::Approx(0.01));
    CHECK(lr_at_epoch(cfg, 99) == doctest::Approx(0.01));
    CHECK(lr_at_epoch(cfg, 100) == doctest::Approx(0.001));
    CHECK(lr_at_epoch(cfg, 150) == doctest::Approx(0.001));
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.lr = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(TrainConfig{}.validate());
  }

  TEST_CASE("split validation and files") {
    CHECK_NOTHROW(kSplit.validate());
    CHECK_THROWS_AS((ViewGroupSplit{{"I"}, {"I"}, {}}.validate()), Error);
    CHECK_THROWS_AS((ViewGroupSplit{{}, {"I"}, {}}.validate()), Error);
    CHECK_THROWS_AS((ViewGroupSplit{{"I"}, {}, {}}.validate()), Error);
    CHECK_NOTHROW((ViewGroupSplit{{"I"}, {}, {"V1"}}.validate(false)));

    const auto path = testing_support::fresh_dir("split") / "split.json";
    write_split(path, kSplit);
    const auto back = read_split(path);
    CHECK(back.input == kSplit.input);
    CHECK(back.reconstruction == kSplit.reconstruction);
    CHECK(back.synthesis == kSplit.synthesis);
  }

  TEST_CASE("total loss composition") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> x(100), y(100);
    for (int trial = 0; trial < 20; ++trial) {
      for (auto& v : x) v = u(rng);
      for (auto& v : y) v = u(rng);
      const double zb = u(rng), zd = u(rng);
      const double expected = oracle::mae(x, y) + 0.5 * (zb + zd);
      CHECK(std::abs(total_loss(x, y, zb, zd) - expected) < 1e-12);
      CHECK(std::abs(total_loss(x, y, zb, zd, false) - oracle::mae(x, y)) < 1e-12);

      const auto rec = ad::mae(ad::constant(y, 1, 100), ad::constant(x, 1, 100));
      const StandinTerms terms{ad::constant(std::vector<double>{zb}, 1, 1),
                               ad::constant(std::vector<double>{zd}, 1, 1)};
      CHECK(std::abs(total_loss(rec, &terms).item() - expected) < 1e-12);
      CHECK(std::abs(total_loss(rec, nullptr).item() - oracle::mae(x, y)) < 1e-12);
    }
    CHECK(total_loss(x, x, 0.0, 0.0) == 0.0);
    const std::vector<double> a(10, 0.5), b(10, 0.7);
    CHECK(total_loss(a, b, 0.1, 0.3) == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("standin loss examples") {
    const auto data = oracle_data(1, 512);
    const NefNet net = NefNet::initialize(ModelConfig{});
    const Viewpoint q = data[0].find("I")->viewpoint;

    SUBCASE("one view gives exactly zero") {
      const auto views = per_view_fields(net, data[0], 1);
      const auto [zb, zd] = standin_loss(net, views, fuse_views(views), q);
      CHECK(zb == 0.0);
      CHECK(zd == 0.0);
    }
    SUBCASE("identical views give zero") {
      auto views = per_view_fields(net, data[0], 1);
      views.push_back(views[0]);
      views.push_back(views[0]);
      const auto [zb, zd] = standin_loss(net, views, fuse_views(views), q);
      CHECK(zb == 0.0);
      CHECK(zd == 0.0);
    }
    SUBCASE("two views match a term-by-term evaluation") {
      const auto views = per_view_fields(net, data[0], 2);
      const auto fused = fuse_views(views);
      const auto [zb, zd] = standin_loss(net, views, fused, q);

      const auto target = net.decode_view(fused, q);
      double expect_b = 0.0, expect_d = 0.0;
      for (const auto& v : views) {
        ElectrocardioField b = fused;
        b.basic = v.basic;
        expect_b += mae(target, net.decode_view(b, q)) / 2;
        ElectrocardioField d = fused;
        d.deflections = v.deflections;
        expect_d += mae(target, net.decode_view(d, q)) / 2;
      }
      CHECK(zb > 0.0);
      CHECK(zd > 0.0);
      CHECK(std::abs(zb - expect_b) < 1e-12);
      CHECK(std::abs(zd - expect_d) < 1e-12);
    }
  }

  TEST_CASE("standin target carries no gradient") {
    const ModelConfig cfg = ModelConfig::small();
    const auto data = oracle_data(1, cfg.signal_length, 4);
    const auto& c = data[0];
    const Parameters params = initialize_parameters(cfg);
    const AngularCode q = angular_encode(c.find("I")->viewpoint);

    auto encode_all = [&](const graph::ParamBinding& b) {
      std::vector<graph::FieldVars> fields;
      for (int i = 0; i < 3; ++i) {
        fields.push_back(graph::encode(cfg, b, c.views[i].cycle.samples, c.views[i].cycle.demarcations,
                                       angular_encode(c.views[i].viewpoint)));
      }
      return fields;
    };

    // Library path: frozen copy feeds the target.
    Gradients lib = zero_gradients(params);
    {
      graph::ParamBinding b(params, true);
      graph::ParamBinding frozen(params, false);
      const auto fields = encode_all(b);
      const auto fused = graph::fuse(fields);
      const auto terms = standin_loss(cfg, b, frozen, fields, fused, q);
      ad::backward(terms.basic);
      b.accumulate_gradients(lib);
    }

    // Reference path: the target is a numeric constant computed up front.
    Gradients ref = zero_gradients(params);
    {
      const NefNet net(cfg, params);
      std::vector<ElectrocardioField> views;
      for (int i = 0; i < 3; ++i) views.push_back(net.encode_view(c.views[i].cycle, c.views[i].viewpoint));
      const auto target_values = net.decode_view(fuse_views(views), c.find("I")->viewpoint);
      const auto target = ad::constant(target_values, 1, cfg.signal_length);

      graph::ParamBinding b(params, true);
      const auto fields = encode_all(b);
      const auto fused = graph::fuse(fields);
      std::vector<ad::Var> terms;
      for (const auto& f : fields) {
        graph::FieldVars swapped = fused;
        swapped.basic = f.basic;
        terms.push_back(ad::mae(graph::decode(cfg, b, swapped, q), target));
      }
      ad::backward(ad::mean(terms));
      b.accumulate_gradients(ref);
    }

    REQUIRE(lib.size() == ref.size());
    bool any_nonzero = false;
    for (std::size_t i = 0; i < lib.size(); ++i) {
      CAPTURE(params.blocks()[i].name);
      CHECK(lib[i] == ref[i]);
      for (double v : lib[i]) any_nonzero |= v != 0.0;
    }
    CHECK(any_nonzero);
  }

  TEST_CASE("sgd step") {
    const ModelConfig cfg = ModelConfig::small();
    Parameters params = initialize_parameters(cfg);
    const Parameters before = params;
    Gradients g = zero_gradients(params);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1);
    for (auto& block : g) {
      for (double& v : block) v = n(rng);
    }
    SgdMomentum plain(0.0);
    plain.step(params, g, 0.05);
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < g[b].size(); i += 7) {
        CHECK(params.blocks()[b].values[i] == before.blocks()[b].values[i] - 0.05 * g[b][i]);
      }
    }

    // Two momentum steps with the same gradient move by lr * (1 + (1 + m)) * g.
    Parameters p2 = before;
    SgdMomentum heavy(0.9);
    heavy.step(p2, g, 0.1);
    heavy.step(p2, g, 0.1);
    const double moved = p2.blocks()[0].values[0] - before.blocks()[0].values[0];
    CHECK(moved == doctest::Approx(-0.1 * 2.9 * g[0][0]).epsilon(1e-12));
  }

  TEST_CASE("global norm clipping") {
    Gradients g{{3.0, 0.0}, {4.0}};
    CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == 3.0);
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0][0] == doctest::Approx(0.6));
    CHECK(g[1][0] == doctest::Approx(0.8));
  }

  TEST_CASE("training is deterministic given the seed") {
    const ModelConfig cfg = ModelConfig::small();
    const auto data = oracle_data(6, cfg.signal_length);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 2;
    tc.seed = 9;
    const auto a = train(data, kSplit, tc, cfg);
    const auto b = train(data, kSplit, tc, cfg);
    REQUIRE(a.history.size() == 3);
    for (int e = 0; e < 3; ++e) {
      CHECK(a.history[e].epoch == e + 1);
      CHECK(a.history[e].loss == b.history[e].loss);
    }
    CHECK(a.params == b.params);
    tc.seed = 10;
    CHECK_FALSE(train(data, kSplit, tc, cfg).params == a.params);
  }

  TEST_CASE("overfits four cycles in 200 steps") {
    const ModelConfig cfg;
    const auto data = oracle_data(4, cfg.signal_length);
    const ViewGroupSplit split{{"II", "aVL", "V1"}, {"I"}, {}};
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 200;
    tc.lr_drops = {};
    tc.standin_enabled = false;
    tc.perturbation = false;
    tc.seed = 3;
    const auto result = train(data, split, tc, cfg);
    const NefNet net(cfg, result.params);
    double total = 0.0;
    for (const auto& c : data) {
      const auto pred = net.decode_view(net.encode(c, split.input), c.find("I")->viewpoint);
      total += mae(c.find("I")->cycle.samples, pred);
    }
    CHECK(total / data.size() < 0.02);
  }

  TEST_CASE("non-finite loss names the step") {
    const ModelConfig cfg = ModelConfig::small();
    const auto data = oracle_data(4, cfg.signal_length);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.lr = 1e300;
    tc.clip_norm = 0.0;
    try {
      train(data, kSplit, tc, cfg);
      FAIL("expected a numeric failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumericFailure);
      CHECK(std::string(e.what()).find("step") != std::string::npos);
      CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
  }

  TEST_CASE("training rejects missing views") {
    const ModelConfig cfg = ModelConfig::small();
    const auto data = oracle_data(2, cfg.signal_length);
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(train(data, ViewGroupSplit{{"II"}, {"aVF"}, {}}, tc, cfg), Error);
  }

  TEST_CASE("history csv") {
    const std::vector<EpochRecord> h{{1, 0.5, 0.4, 0.1}, {2, 0.25, 0.2, 0.01}};
    const std::string csv = history_csv(h);
    CHECK(csv.rfind("epoch,loss,lr\n", 0) == 0);
    CHECK(csv.find("\n1,0.5,0.1\n") != std::string::npos);
    CHECK(csv.find("\n2,0.25,0.01") != std::string::npos);
  }

  TEST_CASE("evaluation reports") {
    auto data = oracle_data(3, 512);
    // A synthesis view that duplicates its nearest input view is predicted
    // perfectly by the copy baseline.
    for (auto& c : data) {
      View dup = *c.find("V1");
      dup.name = "V1dup";
      dup.viewpoint.phi += 1e-3;
      c.views.push_back(dup);
    }
    const ViewGroupSplit split{{"II", "aVL", "V1"}, {"I", "V4"}, {"V1dup", "V3"}};
    const auto copy = evaluate_copy_nearest(data, split, EvalMode::kSynthesis);
    REQUIRE(copy.rows.size() == 2);
    CHECK(copy.rows[0].view == "V1dup");
    CHECK(copy.rows[0].count == 3);
    CHECK(copy.rows[0].psnr_mean == kPsnrCapDb);
    CHECK(copy.rows[0].ssim_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(copy.rows[0].psnr_std == 0.0);
    CHECK(copy.aggregate.count == 6);

    const NefNet net = NefNet::initialize(ModelConfig{});
    const auto rec = evaluate(net, data, split, EvalMode::kTransformation);
    CHECK(rec.mode == EvalMode::kTransformation);
    REQUIRE(rec.rows.size() == 2);
    CHECK(rec.rows[0].view == "I");
    CHECK(rec.rows[1].view == "V4");
    CHECK(rec.aggregate.count == 6);
    CHECK(std::isfinite(rec.aggregate.psnr_mean));

    const auto syn = evaluate(net, data, split, EvalMode::kSynthesis);
    const std::vector<EvalReport> runs{syn, syn};
    const auto combined = combine_runs(runs);
    CHECK(combined.runs == 2);
    CHECK(combined.rows[0].psnr_mean == doctest::Approx(syn.rows[0].psnr_mean));
    CHECK(combined.rows[0].psnr_std == doctest::Approx(0.0));

    const std::string text = format_report(syn);
    CHECK(text.find("V1dup") != std::string::npos);
    CHECK(text.find("synthesis") != std::string::npos);

    CHECK_THROWS_AS(evaluate(net, data, ViewGroupSplit{{"II"}, {}, {}}, EvalMode::kSynthesis), Error);
    CHECK(parse_eval_mode("synthesis") == EvalMode::kSynthesis);
    CHECK(parse_eval_mode("transformation") == EvalMode::kTransformation);
    CHECK_THROWS_AS(parse_eval_mode("bogus"), Error);
  }
}
