#include <catch2/catch_amalgamated.hpp>

#include "cofact/init.hpp"
#include "cofact/metrics.hpp"
#include "cofact/solver.hpp"
#include "cofact/synth.hpp"
#include "helpers.hpp"

using namespace cofact;

TEST_CASE("generate_endmembers produces separated smooth positive spectra") {
  const Matrix W = generate_endmembers(48, 5, 1.0, 123);
  REQUIRE(W.cols() == 5);
  REQUIRE((W.array() > 0.0).all());
  REQUIRE((W.array() <= 1.0).all());
  REQUIRE(W.allFinite());
  const double min_angle = 5.0 * M_PI / 180.0;
  for (Index i = 0; i < 5; ++i)
    for (Index j = i + 1; j < 5; ++j)
      REQUIRE(spectral_angle(W.col(i), W.col(j)) >= min_angle);

  const Matrix single = generate_endmembers(32, 1, 1.0, 9);
  REQUIRE(single.cols() == 1);
  REQUIRE((single.array() > 0.0).all());
}

TEST_CASE("generate_scene honors the noise and mask contracts") {
  const SyntheticScene scene = generate_scene(12, 10, 24, 4, 3, 30.0, 0.15, 77);
  REQUIRE(scene.Y_clean == scene.W_true * scene.H_true);
  REQUIRE((scene.H_true.array() >= 0.0).all());

  const double snr = 10.0 * std::log10(scene.Y_clean.squaredNorm() /
                                       (scene.Y - scene.Y_clean).squaredNorm());
  REQUIRE(snr == Catch::Approx(30.0).margin(0.1));

  std::vector<bool> class_in_mask(3, false);
  std::vector<bool> class_in_map(3, false);
  for (std::size_t p = 0; p < scene.labels.size(); ++p) {
    class_in_map[static_cast<std::size_t>(scene.class_map[p])] = true;
    if (scene.labels[p] != kUnlabeled) {
      REQUIRE(scene.labels[p] == scene.class_map[p]);
      class_in_mask[static_cast<std::size_t>(scene.labels[p])] = true;
    }
  }
  for (int c = 0; c < 3; ++c) {
    REQUIRE(class_in_map[static_cast<std::size_t>(c)]);
    REQUIRE(class_in_mask[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("generate_scene without noise returns the clean mixture") {
  const SyntheticScene scene = generate_scene(
      6, 6, 16, 3, 2, std::numeric_limits<double>::infinity(), 0.2, 3);
  REQUIRE(scene.Y == scene.Y_clean);
}

TEST_CASE("generate_scene rejects a bad training fraction") {
  REQUIRE_THROWS_AS(generate_scene(6, 6, 16, 3, 2, 30.0, 0.0, 3), Error);
  REQUIRE_THROWS_AS(generate_scene(6, 6, 16, 3, 2, 30.0, 1.5, 3), Error);
}

TEST_CASE("generate_scene is deterministic") {
  const SyntheticScene a = generate_scene(8, 9, 20, 4, 3, 25.0, 0.1, 42);
  const SyntheticScene b = generate_scene(8, 9, 20, 4, 3, 25.0, 0.1, 42);
  REQUIRE(a.Y == b.Y);
  REQUIRE(a.H_true == b.H_true);
  REQUIRE(a.class_map == b.class_map);
  REQUIRE(a.labels == b.labels);
}

TEST_CASE("augment_dictionary ties confounders to their sources") {
  const Matrix W = generate_endmembers(40, 4, 1.0, 11);
  REQUIRE(augment_dictionary(W, 0, 0.99, 12) == W);

  std::vector<Index> sources;
  const Matrix Wa = augment_dictionary(W, 6, 0.99, 12, &sources);
  REQUIRE(Wa.cols() == 10);
  REQUIRE(Wa.leftCols(4) == W);
  REQUIRE(sources.size() == 6);
  const double max_angle = 10.0 * M_PI / 180.0;
  for (Index e = 4; e < 10; ++e) {
    double best = std::numeric_limits<double>::infinity();
    Index best_src = -1;
    for (Index r = 0; r < 4; ++r) {
      const double a = spectral_angle(Wa.col(e), W.col(r));
      if (a < best) {
        best = a;
        best_src = r;
      }
    }
    REQUIRE(best <= max_angle);
    REQUIRE(best_src == sources[static_cast<std::size_t>(e - 4)]);
  }
}

TEST_CASE("noiseless unmixing-only solve recovers the true abundances") {
  const SyntheticScene scene = generate_scene(
      10, 10, 32, 4, 2, std::numeric_limits<double>::infinity(), 0.2, 5);

  Problem pb;
  pb.observations = scene.Y;
  pb.dictionary = scene.W_true;
  pb.labels = scene.labels;
  pb.grid = scene.grid;
  pb.num_classes = 2;
  pb.num_clusters = 3;
  pb.variant = Variant::Quadratic;
  pb.hyper.lambda0 = 1.0;
  pb.hyper.lambda1 = pb.hyper.lambda2 = pb.hyper.lambda_c = 0.0;
  pb.hyper.lambda_h = 0.0;

  InitConfig ic;
  ic.seed = 6;
  ic.alpha_group = 0.0;  // plain least squares; keep every atom
  ic.group_lasso_iters = 3000;
  ic.group_lasso_tol = 1e-12;
  ic.row_prune_tol = 1e-9;
  const InitResult init = initialize(pb, ic);
  REQUIRE(init.kept_candidates.size() == 4);  // all true atoms stay active

  SolverConfig sc;
  sc.stop_tol = 0.0;  // run the full budget
  sc.max_iters = 4000;
  const ClassWeights w = build_class_weights(pb.labels, pb.num_classes);
  Problem solve_pb = pb;
  solve_pb.dictionary = init.dictionary;
  const auto [state, report] = solve(solve_pb, init.state, w, sc);
  REQUIRE_FALSE(report.nonfinite_abort);
  REQUIRE(abundance_rmse(scene.H_true, state.H) < 1e-3);
}
