#include <catch2/catch_amalgamated.hpp>

#include "cofact/objective.hpp"
#include "helpers.hpp"

using namespace cofact;

namespace {

/// Term-by-term recomputation with plain loops; shares nothing with
/// evaluate_terms beyond the formulas themselves.
double total_reference(const Problem& pb, const State& s,
                       const ClassWeights& w) {
  const auto& hy = pb.hyper;
  double repr = 0.0;
  const Index L = pb.num_bands(), P = pb.num_pixels();
  for (Index p = 0; p < P; ++p)
    for (Index l = 0; l < L; ++l) {
      double fit = 0.0;
      for (Index r = 0; r < pb.num_atoms(); ++r)
        fit += pb.dictionary(l, r) * s.H(r, p);
      const double e = pb.observations(l, p) - fit;
      repr += e * e;
    }
  repr *= 0.5 * hy.lambda0;

  double l1 = 0.0;
  for (Index p = 0; p < P; ++p)
    for (Index r = 0; r < s.H.rows(); ++r) l1 += std::abs(s.H(r, p));
  l1 *= hy.lambda_h;

  double clust = 0.0;
  for (Index p = 0; p < P; ++p)
    for (Index r = 0; r < s.H.rows(); ++r) {
      double bz = 0.0;
      for (Index k = 0; k < s.B.cols(); ++k) bz += s.B(r, k) * s.Z(k, p);
      const double e = s.H(r, p) - bz;
      clust += e * e;
    }
  clust *= 0.5 * hy.lambda2;

  double classif = 0.0;
  double decay = 0.0;
  for (Index p = 0; p < P; ++p) {
    const double d2 = w.d[p] * w.d[p];
    for (Index i = 0; i < pb.num_classes; ++i) {
      double qz = 0.0;
      for (Index k = 0; k < s.Q.cols(); ++k) qz += s.Q(i, k) * s.Z(k, p);
      if (pb.variant == Variant::Quadratic) {
        const double e = s.C(i, p) - qz;
        classif += d2 * e * e;
      } else {
        classif -= d2 * s.C(i, p) * std::log(1.0 / (1.0 + std::exp(-qz)));
      }
    }
  }
  classif *= 0.5 * hy.lambda1;
  if (pb.variant == Variant::CrossEntropy)
    decay = 0.5 * hy.lambda_q * s.Q.squaredNorm();

  const double tv = hy.lambda_c * vtv_value(s.C, pb.grid, hy.epsilon_tv);
  return repr + l1 + clust + classif + decay + tv;
}

struct Instance {
  Problem pb;
  State s;
  ClassWeights w;
};

Instance make_instance(Variant v, std::uint64_t seed) {
  Instance inst;
  inst.pb = testing::make_problem(12, 8, 5, 5, 4, 3, v, seed);  // P = 40
  inst.s = testing::make_state(inst.pb, seed + 100);
  inst.w = build_class_weights(inst.pb.labels, inst.pb.num_classes);
  return inst;
}

double smooth_at(const Instance& inst, const State& s) {
  return evaluate_terms(inst.pb, s.H, s.B, s.Z, s.Q, s.C, inst.w).smooth_part();
}

}  // namespace

TEST_CASE("objective_value with all residuals zero leaves only the vTV term") {
  Problem pb = testing::make_problem(6, 2, 3, 4, 3, 2, Variant::Quadratic, 41);
  pb.labels.assign(pb.labels.size(), kUnlabeled);  // attribution free everywhere
  pb.hyper.lambda_h = 0.0;
  pb.hyper.lambda_c = 0.5;
  SpatialGrid g(2, 3);
  pb.grid = g;  // uniform weights

  Rng rng(42);
  State s;
  s.B = testing::random_matrix(rng, 4, 3, 0.0, 1.0);
  s.Z = Matrix::Zero(3, 6);
  for (Index p = 0; p < 6; ++p) s.Z(p % 3, p) = 1.0;
  s.H = s.B * s.Z;
  pb.observations = pb.dictionary * s.H;
  s.Q = Matrix::Constant(2, 3, 0.5);  // rows sum against Z columns -> 1/2
  s.C = Matrix::Constant(2, 6, 0.5);

  ClassWeights w;
  w.d = Vector::Ones(6);
  const ObjectiveBreakdown b = objective_value(pb, s, w);
  REQUIRE(b.term_repr == 0.0);
  REQUIRE(b.term_clust == 0.0);
  REQUIRE(b.term_classif == Catch::Approx(0.0).margin(1e-24));
  REQUIRE(b.total ==
          Catch::Approx(0.5 * std::sqrt(pb.hyper.epsilon_tv)).epsilon(1e-10));
}

TEST_CASE("objective_value is zero when every weight is zero") {
  Instance inst = make_instance(Variant::Quadratic, 43);
  inst.pb.hyper.lambda0 = inst.pb.hyper.lambda1 = inst.pb.hyper.lambda2 = 0.0;
  inst.pb.hyper.lambda_h = inst.pb.hyper.lambda_q = inst.pb.hyper.lambda_c = 0.0;
  REQUIRE(objective_value(inst.pb, inst.s, inst.w).total == 0.0);
}

TEST_CASE("objective_value matches the loop-based recomputation") {
  for (auto v : {Variant::Quadratic, Variant::CrossEntropy}) {
    const Instance inst = make_instance(v, 44);
    const ObjectiveBreakdown b = objective_value(inst.pb, inst.s, inst.w);
    const double ref = total_reference(inst.pb, inst.s, inst.w);
    REQUIRE(b.total == Catch::Approx(ref).epsilon(1e-10));
    REQUIRE(b.total == Catch::Approx(b.term_repr + b.term_l1 + b.term_clust +
                                     b.term_classif + b.term_weight_decay +
                                     b.term_vtv)
                           .epsilon(1e-9));
  }
}

TEST_CASE("objective_value rejects infeasible states") {
  Instance inst = make_instance(Variant::Quadratic, 45);
  inst.s.H(0, 0) = -1.0;
  REQUIRE_THROWS_AS(objective_value(inst.pb, inst.s, inst.w), Error);
}

TEST_CASE("grad_H trivial cases") {
  Instance inst = make_instance(Variant::Quadratic, 46);
  SECTION("zero residual, no clustering pull") {
    Problem pb = inst.pb;
    pb.dictionary = Matrix::Identity(12, 12);
    pb.hyper.lambda2 = 0.0;
    State s = inst.s;
    Rng rng(1);
    s.H = testing::random_matrix(rng, 12, 40, 0.0, 1.0);
    pb.observations = s.H;
    REQUIRE(grad_H(pb, s).norm() == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("pure clustering term with zero centroids") {
    Problem pb = inst.pb;
    pb.hyper.lambda0 = 0.0;
    pb.hyper.lambda2 = 1.0;
    State s = inst.s;
    s.B.setZero();
    REQUIRE((grad_H(pb, s) - s.H).norm() == 0.0);
  }
}

TEST_CASE("grad_B trivial cases") {
  Instance inst = make_instance(Variant::Quadratic, 47);
  SECTION("zero residual") {
    State s = inst.s;
    s.H = s.B * s.Z;
    REQUIRE(grad_B(inst.pb, s).norm() == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("zero attributions annihilate") {
    State s = inst.s;
    s.Z.setZero();
    REQUIRE(grad_B(inst.pb, s).norm() == 0.0);
  }
}

TEST_CASE("grad_Z trivial cases") {
  SECTION("quadratic, zero classifier and zero clustering residual") {
    Instance inst = make_instance(Variant::Quadratic, 48);
    State s = inst.s;
    s.Q.setZero();
    s.H = s.B * s.Z;
    // classification part becomes -Q' C D^2 = 0; clustering residual zero
    REQUIRE(grad_Z(inst.pb, s, inst.w).norm() ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("cross-entropy, saturated true-class logits") {
    Instance inst = make_instance(Variant::CrossEntropy, 49);
    Problem pb = inst.pb;
    pb.hyper.lambda2 = 0.0;  // isolate the classification part
    State s = inst.s;
    // one-hot attributions aligned with one-hot Z and huge logits
    s.Z = Matrix::Zero(s.Z.rows(), s.Z.cols());
    for (Index p = 0; p < s.Z.cols(); ++p) s.Z(p % s.Z.rows(), p) = 1.0;
    s.C = Matrix::Zero(s.C.rows(), s.C.cols());
    for (Index p = 0; p < s.C.cols(); ++p) {
      const int lab = pb.labels[static_cast<std::size_t>(p)];
      s.C(lab == kUnlabeled ? 0 : lab, p) = 1.0;
    }
    s.Q = Matrix::Constant(s.Q.rows(), s.Q.cols(), 50.0);  // q_i z_p = 50
    REQUIRE(grad_Z(pb, s, inst.w).norm() == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("grad_Q trivial cases") {
  SECTION("quadratic with exact classifier fit") {
    Instance inst = make_instance(Variant::Quadratic, 50);
    State s = inst.s;
    s.C = s.Q * s.Z;  // raw-matrix evaluation does not need feasibility
    REQUIRE(grad_Q(inst.pb, s, inst.w).norm() ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("cross-entropy reduces to weight decay when lambda1 = 0") {
    Instance inst = make_instance(Variant::CrossEntropy, 51);
    inst.pb.hyper.lambda1 = 0.0;
    const Matrix g = grad_Q(inst.pb, inst.s, inst.w);
    REQUIRE((g - inst.pb.hyper.lambda_q * inst.s.Q).norm() == 0.0);
  }
  SECTION("quadratic normal-equations form with identity weights") {
    Instance inst = make_instance(Variant::Quadratic, 52);
    inst.pb.hyper.lambda2 = 0.0;
    inst.pb.hyper.lambda_c = 0.0;
    ClassWeights w;
    w.d = Vector::Ones(inst.pb.num_pixels());
    const Matrix g = grad_Q(inst.pb, inst.s, w);
    const Matrix want =
        inst.pb.hyper.lambda1 *
        (inst.s.Q * inst.s.Z * inst.s.Z.transpose() -
         inst.s.C * inst.s.Z.transpose());
    REQUIRE((g - want).norm() <= 1e-12 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("grad_CU trivial cases") {
  SECTION("quadratic, exact fit and constant field") {
    Problem pb = testing::make_problem(6, 2, 3, 4, 3, 2, Variant::Quadratic, 53);
    pb.labels.assign(pb.labels.size(), kUnlabeled);
    pb.grid = SpatialGrid(2, 3);
    State s = testing::make_state(pb, 54);
    s.C = Matrix::Constant(2, 6, 0.5);
    s.Q = Matrix::Constant(2, 3, 0.5);  // QZ = 1/2 everywhere
    ClassWeights w;
    w.d = Vector::Ones(6);
    REQUIRE(grad_CU(pb, s, w).norm() == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("lambda1 = 0 leaves the scaled vTV gradient") {
    Instance inst = make_instance(Variant::Quadratic, 55);
    inst.pb.hyper.lambda1 = 0.0;
    const Matrix g = grad_CU(inst.pb, inst.s, inst.w);
    const Matrix full = inst.pb.hyper.lambda_c *
                        vtv_grad(inst.s.C, inst.pb.grid, inst.pb.hyper.epsilon_tv);
    const auto unlabeled = inst.pb.unlabeled_indices();
    for (std::size_t j = 0; j < unlabeled.size(); ++j)
      REQUIRE((g.col(static_cast<Index>(j)) - full.col(unlabeled[j])).norm() ==
              0.0);
  }
}

TEST_CASE("every block gradient matches central finite differences") {
  for (auto v : {Variant::Quadratic, Variant::CrossEntropy}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Instance inst = make_instance(v, 60 + seed);
      const Problem& pb = inst.pb;
      State s = inst.s;
      const auto unlabeled = pb.unlabeled_indices();

      auto eval_H = [&](const Matrix& m) {
        State t = s;
        t.H = m;
        return smooth_at(inst, t);
      };
      REQUIRE(testing::fd_max_rel_error(grad_H(pb, s), s.H, eval_H) < 1e-5);

      auto eval_B = [&](const Matrix& m) {
        State t = s;
        t.B = m;
        return smooth_at(inst, t);
      };
      REQUIRE(testing::fd_max_rel_error(grad_B(pb, s), s.B, eval_B) < 1e-5);

      auto eval_Z = [&](const Matrix& m) {
        State t = s;
        t.Z = m;
        return smooth_at(inst, t);
      };
      REQUIRE(testing::fd_max_rel_error(grad_Z(pb, s, inst.w), s.Z, eval_Z) <
              1e-5);

      auto eval_Q = [&](const Matrix& m) {
        State t = s;
        t.Q = m;
        return smooth_at(inst, t);
      };
      REQUIRE(testing::fd_max_rel_error(grad_Q(pb, s, inst.w), s.Q, eval_Q) <
              1e-5);

      Matrix cu(pb.num_classes, static_cast<Index>(unlabeled.size()));
      for (std::size_t j = 0; j < unlabeled.size(); ++j)
        cu.col(static_cast<Index>(j)) = s.C.col(unlabeled[j]);
      auto eval_CU = [&](const Matrix& m) {
        State t = s;
        for (std::size_t j = 0; j < unlabeled.size(); ++j)
          t.C.col(unlabeled[j]) = m.col(static_cast<Index>(j));
        return smooth_at(inst, t);
      };
      REQUIRE(testing::fd_max_rel_error(grad_CU(pb, s, inst.w), cu, eval_CU) <
              1e-5);
    }
  }
}

TEST_CASE("cross-entropy slope is nonpositive toward the true class") {
  const Instance inst = make_instance(Variant::CrossEntropy, 70);
  const Matrix S = inst.s.Q * inst.s.Z;
  const Matrix E = detail::cross_entropy_slope(inst.s.C, S, inst.w.d);
  REQUIRE((E.array() <= 0.0).all());
}

TEST_CASE("lipschitz_constant fixed values") {
  SECTION("identity dictionary") {
    Problem pb = testing::make_problem(12, 8, 5, 12, 4, 3, Variant::Quadratic, 71);
    pb.dictionary = Matrix::Identity(12, 12);
    pb.hyper.lambda0 = 1.0;
    pb.hyper.lambda2 = 1.0;
    const State s = testing::make_state(pb, 72);
    const ClassWeights w = build_class_weights(pb.labels, pb.num_classes);
    REQUIRE(lipschitz_constant(pb, s, Block::H, w) ==
            Catch::Approx(2.0).epsilon(1e-6));
  }
  SECTION("attribution block, classification term only") {
    Problem pb = testing::make_problem(6, 2, 3, 4, 3, 2, Variant::Quadratic, 73);
    pb.hyper.lambda1 = 1.0;
    pb.hyper.lambda_c = 0.0;
    // exactly one unlabeled pixel -> d = 1 there
    pb.labels = {0, 1, 0, 1, 0, kUnlabeled};
    const State s = testing::make_state(pb, 74);
    const ClassWeights w = build_class_weights(pb.labels, pb.num_classes);
    REQUIRE(lipschitz_constant(pb, s, Block::CU, w) ==
            Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("empirical Lipschitz quotients never exceed the constants") {
  for (auto v : {Variant::Quadratic, Variant::CrossEntropy}) {
    Instance inst = make_instance(v, 80);
    const Problem& pb = inst.pb;
    Rng rng(81);
    for (int trial = 0; trial < 60; ++trial) {
      State a = testing::make_state(pb, 1000 + trial);
      State b = testing::make_state(pb, 5000 + trial);

      {
        const double L = lipschitz_constant(pb, a, Block::H, inst.w);
        State a2 = a, b2 = a;
        b2.H = b.H;
        const double q = (grad_H(pb, a2) - grad_H(pb, b2)).norm() /
                         (a2.H - b2.H).norm();
        REQUIRE(q <= L * (1.0 + 1e-9));
      }
      {
        const double L = lipschitz_constant(pb, a, Block::B, inst.w);
        State b2 = a;
        b2.B = b.B;
        const double q = (grad_B(pb, a) - grad_B(pb, b2)).norm() /
                         (a.B - b2.B).norm();
        REQUIRE(q <= L * (1.0 + 1e-9));
      }
      {
        const double L = lipschitz_constant(pb, a, Block::Z, inst.w);
        State b2 = a;
        b2.Z = b.Z;
        const double q = (grad_Z(pb, a, inst.w) - grad_Z(pb, b2, inst.w)).norm() /
                         (a.Z - b2.Z).norm();
        REQUIRE(q <= L * (1.0 + 1e-9));
      }
      {
        const double L = lipschitz_constant(pb, a, Block::Q, inst.w);
        State b2 = a;
        b2.Q = b.Q;
        const double q = (grad_Q(pb, a, inst.w) - grad_Q(pb, b2, inst.w)).norm() /
                         (a.Q - b2.Q).norm();
        REQUIRE(q <= L * (1.0 + 1e-9));
      }
      {
        const double L = lipschitz_constant(pb, a, Block::CU, inst.w);
        State b2 = a;
        b2.C = b.C;
        const double q =
            (grad_CU(pb, a, inst.w) - grad_CU(pb, b2, inst.w)).norm() /
            (a.C - b2.C).norm();
        REQUIRE(q <= L * (1.0 + 1e-9));
      }
    }
  }
}

TEST_CASE("lipschitz_constant ignores unrelated blocks") {
  const Instance inst = make_instance(Variant::Quadratic, 90);
  State other = testing::make_state(inst.pb, 91);
  State mixed = inst.s;
  mixed.Z = other.Z;
  mixed.Q = other.Q;
  mixed.C = other.C;
  REQUIRE(lipschitz_constant(inst.pb, inst.s, Block::H, inst.w) ==
          lipschitz_constant(inst.pb, mixed, Block::H, inst.w));
  // L_B depends on Z only
  State mixed2 = inst.s;
  mixed2.H = other.H;
  mixed2.B = other.B;
  mixed2.Q = other.Q;
  REQUIRE(lipschitz_constant(inst.pb, inst.s, Block::B, inst.w) ==
          lipschitz_constant(inst.pb, mixed2, Block::B, inst.w));
}

TEST_CASE("predict_classes follows the argmax with smallest-index ties") {
  State s;
  s.C.resize(3, 3);
  s.C.col(0) << 0.0, 0.0, 1.0;
  s.C.col(1) << 0.5, 0.5, 0.0;
  s.C.col(2) << 0.1, 0.2, 0.7;
  const auto pred = predict_classes(s);
  REQUIRE(pred[0] == 2);
  REQUIRE(pred[1] == 0);  // tie between the first two classes
  REQUIRE(pred[2] == 2);
}

TEST_CASE("labeled pixels predict their ground truth") {
  const Instance inst = make_instance(Variant::Quadratic, 92);
  const auto pred = predict_classes(inst.s);
  for (Index p = 0; p < inst.pb.num_pixels(); ++p) {
    const int lab = inst.pb.labels[static_cast<std::size_t>(p)];
    if (lab != kUnlabeled) REQUIRE(pred[static_cast<std::size_t>(p)] == lab);
  }
}
