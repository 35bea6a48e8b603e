#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cofact/init.hpp"
#include "cofact/io.hpp"
#include "cofact/metrics.hpp"
#include "cofact/objective.hpp"
#include "cofact/solver.hpp"
#include "cofact/synth.hpp"
#include "cofact/types.hpp"
#include "cofact/vtv.hpp"

namespace cofact {
namespace cli {

namespace fs = std::filesystem;

inline std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

/// 1 x P matrix of 1-based class ids (0 = unlabeled) -> internal labels.
inline std::vector<int> labels_from_matrix(const Matrix& m, int num_classes) {
  if (m.rows() != 1)
    throw Error(ErrorCode::DimensionMismatch, "label file must be 1 x P");
  std::vector<int> out(static_cast<std::size_t>(m.cols()));
  for (Index p = 0; p < m.cols(); ++p) {
    const double v = m(0, p);
    if (!(v == std::floor(v)) || v < 0 || v > num_classes)
      throw Error(ErrorCode::DimensionMismatch,
                  "label value out of range at pixel " + std::to_string(p));
    out[static_cast<std::size_t>(p)] = static_cast<int>(v) - 1;
    if (out[static_cast<std::size_t>(p)] < 0)
      out[static_cast<std::size_t>(p)] = kUnlabeled;
  }
  return out;
}

inline Matrix labels_to_matrix(const std::vector<int>& labels) {
  Matrix m(1, static_cast<Index>(labels.size()));
  for (std::size_t p = 0; p < labels.size(); ++p)
    m(0, static_cast<Index>(p)) =
        labels[p] == kUnlabeled ? 0.0 : static_cast<double>(labels[p] + 1);
  return m;
}

inline Hyperparameters hyper_from_config(const RunConfig& cfg, const Matrix& Y) {
  Hyperparameters raw;
  raw.lambda0 = cfg.lambda0_tilde;
  raw.lambda1 = cfg.lambda1;
  raw.lambda2 = cfg.lambda2;
  raw.lambda_h = cfg.lambda_h;
  raw.lambda_q = cfg.lambda_q_tilde;
  raw.lambda_c = cfg.lambda_c_tilde;
  raw.epsilon_tv = cfg.epsilon_tv;
  raw.sigma_beta = cfg.sigma_beta;
  raw.stop_tol = cfg.stop_tol;
  raw.max_iters = cfg.max_iters;
  raw.alpha = cfg.alpha;
  raw.seed = cfg.seed;
  return scale_hyperparameters(raw, Y, cfg.C);
}

inline InitConfig init_from_config(const RunConfig& cfg) {
  InitConfig ic;
  ic.J = cfg.J;
  ic.alpha_group = cfg.alpha_group;
  ic.group_lasso_iters = cfg.group_lasso_iters;
  ic.group_lasso_tol = cfg.group_lasso_tol;
  ic.kmeans_restarts = cfg.kmeans_restarts;
  ic.kmeans_iters = cfg.kmeans_iters;
  ic.row_prune_tol = cfg.row_prune_tol;
  ic.seed = cfg.seed;
  ic.dict_source = cfg.dict_mode == "self" ? DictionarySource::SelfDictionary
                                           : DictionarySource::Provided;
  return ic;
}

/// Loads Y/W/labels per the config and assembles the (unvalidated) problem.
inline Problem problem_from_config(const RunConfig& cfg) {
  Problem pb;
  pb.observations = read_matrix(join(cfg.data_dir, "Y.cofa"));
  if (cfg.dict_mode == "self") {
    // placeholder; the initializer replaces it with the self-dictionary
    pb.dictionary = Matrix::Ones(pb.observations.rows(), 1);
  } else {
    pb.dictionary = read_matrix(join(cfg.data_dir, "W.cofa"));
  }
  pb.labels = labels_from_matrix(read_matrix(join(cfg.data_dir, "labels.cofa")),
                                 cfg.C);
  if (static_cast<Index>(cfg.M) * cfg.N != pb.observations.cols())
    throw Error(ErrorCode::DimensionMismatch,
                "M * N does not match the pixel count of Y");
  pb.grid = compute_edge_weights(pb.observations, SpatialGrid(cfg.M, cfg.N),
                                 cfg.sigma_beta);
  pb.num_classes = cfg.C;
  pb.num_clusters = cfg.K;
  pb.variant = cfg.variant == "ce" ? Variant::CrossEntropy : Variant::Quadratic;
  pb.hyper = hyper_from_config(cfg, pb.observations);
  return pb;
}

inline int cmd_synth(const RunConfig& cfg, bool csv) {
  SyntheticScene scene =
      generate_scene(cfg.M, cfg.N, cfg.L, cfg.R_true, cfg.C, cfg.snr_db,
                     cfg.train_fraction, cfg.seed);
  const Matrix W = augment_dictionary(scene.W_true, cfg.extra_endmembers,
                                      cfg.endmember_correlation, cfg.seed);
  fs::create_directories(cfg.data_dir);
  write_matrix(join(cfg.data_dir, "Y.cofa"), scene.Y);
  write_matrix(join(cfg.data_dir, "W.cofa"), W);
  write_matrix(join(cfg.data_dir, "H_true.cofa"), scene.H_true);
  Matrix classmap(1, static_cast<Index>(scene.class_map.size()));
  for (std::size_t p = 0; p < scene.class_map.size(); ++p)
    classmap(0, static_cast<Index>(p)) = scene.class_map[p] + 1;
  write_matrix(join(cfg.data_dir, "classmap.cofa"), classmap);
  write_matrix(join(cfg.data_dir, "labels.cofa"), labels_to_matrix(scene.labels));
  if (csv) {
    write_text(join(cfg.data_dir, "Y.csv"), matrix_csv(scene.Y));
    write_text(join(cfg.data_dir, "W.csv"), matrix_csv(W));
    write_text(join(cfg.data_dir, "H_true.csv"), matrix_csv(scene.H_true));
  }
  std::cout << "scene: " << cfg.M << "x" << cfg.N << " pixels, " << cfg.L
            << " bands, " << cfg.R_true << "+" << cfg.extra_endmembers
            << " endmembers, C=" << cfg.C << ", files in " << cfg.data_dir
            << "\n";
  return 0;
}

inline int cmd_run(const RunConfig& cfg, bool csv) {
  Problem pb = problem_from_config(cfg);
  const auto issues = validate_problem(pb);
  if (!issues.empty()) {
    for (const auto& i : issues) std::cerr << "invalid problem: " << i.message << "\n";
    return 2;
  }
  const ClassWeights weights = build_class_weights(pb.labels, pb.num_classes);
  const InitResult init = initialize(pb, init_from_config(cfg));

  Problem solve_pb = pb;
  solve_pb.dictionary = init.dictionary;

  SolverConfig sc;
  sc.alpha = cfg.alpha;
  sc.stop_tol = cfg.stop_tol;
  sc.max_iters = cfg.max_iters;
  auto [state, report] = solve(solve_pb, init.state, weights, sc);

  fs::create_directories(cfg.out_dir);
  write_matrix(join(cfg.out_dir, "W_used.cofa"), init.dictionary);

  Matrix H_out;
  if (cfg.dict_mode == "provided") {
    // re-embed pruned rows so H matches the input dictionary column for column
    H_out = Matrix::Zero(pb.dictionary.cols(), pb.num_pixels());
    for (std::size_t j = 0; j < init.kept_candidates.size(); ++j)
      H_out.row(init.kept_candidates[j]) = state.H.row(static_cast<Index>(j));
  } else {
    H_out = state.H;
  }
  write_matrix(join(cfg.out_dir, "H.cofa"), H_out);
  write_matrix(join(cfg.out_dir, "B.cofa"), state.B);
  write_matrix(join(cfg.out_dir, "Z.cofa"), state.Z);
  write_matrix(join(cfg.out_dir, "Q.cofa"), state.Q);
  write_matrix(join(cfg.out_dir, "C.cofa"), state.C);

  const std::vector<int> pred = predict_classes(state);
  Matrix predmap(1, static_cast<Index>(pred.size()));
  for (std::size_t p = 0; p < pred.size(); ++p)
    predmap(0, static_cast<Index>(p)) = pred[p] + 1;
  write_matrix(join(cfg.out_dir, "predmap.cofa"), predmap);
  write_text(join(cfg.out_dir, "trace.csv"), trace_csv(report));
  if (csv) {
    write_text(join(cfg.out_dir, "H.csv"), matrix_csv(H_out));
    write_text(join(cfg.out_dir, "C.csv"), matrix_csv(state.C));
    write_text(join(cfg.out_dir, "predmap.csv"), matrix_csv(predmap));
  }

  const auto& last = report.records.back();
  std::cout << "iterations: " << last.iteration << "\n"
            << "objective: " << detail::fmt_double(last.objective.total) << "\n"
            << "stop: "
            << (report.stop_reason == StopReason::Converged ? "converged"
                                                            : "max_iters")
            << "\n";
  if (report.nonfinite_abort) {
    std::cerr << "solver hit a non-finite iterate\n";
    return 3;
  }
  return 0;
}

inline int cmd_eval(const RunConfig& cfg) {
  const Matrix Y = read_matrix(join(cfg.data_dir, "Y.cofa"));
  const Matrix H = read_matrix(join(cfg.out_dir, "H.cofa"));
  Matrix W;
  bool have_w = false;
  if (cfg.dict_mode == "provided" && fs::exists(join(cfg.data_dir, "W.cofa"))) {
    W = read_matrix(join(cfg.data_dir, "W.cofa"));
    have_w = W.cols() == H.rows();
  }
  if (!have_w) {
    W = read_matrix(join(cfg.out_dir, "W_used.cofa"));
  }
  const double re = reconstruction_error(Y, W, H);

  double rmse = std::numeric_limits<double>::quiet_NaN();
  if (fs::exists(join(cfg.data_dir, "H_true.cofa"))) {
    Matrix Ht = read_matrix(join(cfg.data_dir, "H_true.cofa"));
    Matrix He = H;
    if (Ht.cols() == He.cols()) {
      // confounder atoms carry zero true abundance; align by zero-padding
      const Index rows = std::max(Ht.rows(), He.rows());
      if (Ht.rows() < rows) {
        Matrix padded = Matrix::Zero(rows, Ht.cols());
        padded.topRows(Ht.rows()) = Ht;
        Ht = std::move(padded);
      }
      if (He.rows() < rows) {
        Matrix padded = Matrix::Zero(rows, He.cols());
        padded.topRows(He.rows()) = He;
        He = std::move(padded);
      }
      rmse = abundance_rmse(Ht, He);
    }
  }

  const std::vector<int> truth = labels_from_matrix(
      read_matrix(join(cfg.data_dir, "classmap.cofa")), cfg.C);
  const std::vector<int> pred = labels_from_matrix(
      read_matrix(join(cfg.out_dir, "predmap.cofa")), cfg.C);
  const std::vector<int> train = labels_from_matrix(
      read_matrix(join(cfg.data_dir, "labels.cofa")), cfg.C);
  if (truth.size() != pred.size() || truth.size() != train.size())
    throw Error(ErrorCode::DimensionMismatch, "map sizes disagree");

  // test set: unlabeled pixels with ground truth
  std::vector<int> t_mask, p_mask;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (train[p] != kUnlabeled) continue;
    if (truth[p] == kUnlabeled || pred[p] == kUnlabeled) continue;
    t_mask.push_back(truth[p]);
    p_mask.push_back(pred[p]);
  }
  const ClassificationScores scores =
      classification_scores(p_mask, t_mask, cfg.C);

  std::printf("re=%s\n", detail::fmt_double(re).c_str());
  std::printf("rmse=%s\n", detail::fmt_double(rmse).c_str());
  std::printf("kappa=%s\n", detail::fmt_double(scores.kappa).c_str());
  std::printf("f1_mean=%s\n", detail::fmt_double(scores.f1_mean).c_str());
  for (int i = 0; i < cfg.C; ++i)
    std::printf("f1_class_%d=%s\n", i + 1,
                detail::fmt_double(scores.per_class_f1[static_cast<std::size_t>(i)])
                    .c_str());
  return 0;
}

inline int cmd_check(const RunConfig& cfg) {
  const Problem pb = problem_from_config(cfg);
  const auto issues = validate_problem(pb);
  if (issues.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& i : issues) std::cerr << i.message << "\n";
  return 2;
}

}  // namespace cli

/*
 * Command front end. Exit codes: 0 success, 1 usage error, 2 data error,
 * 3 non-finite iterate inside the solver. COFACT_THREADS caps internal
 * linear-algebra parallelism; 0 or unset means the sequential deterministic
 * mode (the build is single-threaded unless Eigen is compiled with OpenMP,
 * so any cap is honored).
 */
inline int cli_main(const std::vector<std::string>& args) {
  if (const char* threads = std::getenv("COFACT_THREADS")) {
    const int n = std::atoi(threads);
    Eigen::setNbThreads(n <= 0 ? 1 : n);
  } else {
    Eigen::setNbThreads(1);
  }

  CLI::App app{"joint spectral unmixing, clustering and classification"};
  app.require_subcommand(1);

  std::string config_path;
  bool csv = false;

  auto add_common = [&](CLI::App* sub, bool with_csv) {
    sub->add_option("--config", config_path, "run configuration file")
        ->required();
    if (with_csv) sub->add_flag("--csv", csv, "also write CSV copies");
  };
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene");
  add_common(synth, true);
  CLI::App* run = app.add_subcommand("run", "initialize and solve");
  add_common(run, true);
  CLI::App* eval = app.add_subcommand("eval", "score a finished run");
  add_common(eval, false);
  CLI::App* check = app.add_subcommand("check", "validate the problem files");
  add_common(check, false);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const RunConfig cfg = load_config(config_path);
    if (synth->parsed()) return cli::cmd_synth(cfg, csv);
    if (run->parsed()) return cli::cmd_run(cfg, csv);
    if (eval->parsed()) return cli::cmd_eval(cfg);
    if (check->parsed()) return cli::cmd_check(cfg);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NonFiniteIterate ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cofact
