#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cofact/kmeans.hpp"
#include "cofact/rng.hpp"
#include "cofact/types.hpp"

namespace cofact {

/*
 * Fully known synthetic scene: noiseless mixture, additive white Gaussian
 * noise at an exact SNR, a patchwise class map and a per-class training
 * mask. Everything is a pure function of the seed.
 */
struct SyntheticScene {
  Matrix Y;          // noisy observations, L x P
  Matrix Y_clean;    // W_true * H_true
  Matrix W_true;     // L x R_true
  Matrix H_true;     // R_true x P
  std::vector<int> class_map;   // length P, 0-based class ids
  std::vector<int> labels;      // length P, kUnlabeled outside the train mask
  SpatialGrid grid;
  double snr_db = 0.0;
};

/*
 * Smooth positive endmember spectra in (0, 1]: seeded mixtures of Gaussian
 * bumps over the band axis, regenerated until every pair is at least 5
 * degrees apart in spectral angle.
 */
inline Matrix generate_endmembers(Index L, Index R_true, double smoothness,
                                  std::uint64_t seed) {
  if (L < 2 || R_true < 1)
    throw Error(ErrorCode::DimensionMismatch,
                "endmember generation needs L >= 2, R >= 1");
  const double min_angle = 5.0 * M_PI / 180.0;
  Rng rng(seed ^ 0xe9d1b2a3c4f5ULL);
  Matrix W(L, R_true);

  for (Index r = 0; r < R_true; ++r) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Vector col = Vector::Constant(L, 0.05 + 0.1 * rng.uniform());
      const int bumps = 2 + static_cast<int>(rng.uniform_index(4));
      for (int b = 0; b < bumps; ++b) {
        const double amp = rng.uniform(0.2, 1.0);
        const double mu = rng.uniform(0.0, static_cast<double>(L - 1));
        const double width =
            smoothness * rng.uniform(0.05, 0.25) * static_cast<double>(L);
        for (Index l = 0; l < L; ++l) {
          const double z = (static_cast<double>(l) - mu) / width;
          col[l] += amp * std::exp(-0.5 * z * z);
        }
      }
      col /= col.maxCoeff();  // entries now in (0, 1]
      bool separated = true;
      for (Index j = 0; j < r && separated; ++j)
        separated = spectral_angle(col, W.col(j)) >= min_angle;
      if (separated) {
        W.col(r) = col;
        break;
      }
    }
  }
  return W;
}

/*
 * Appends `extra` confounder spectra: smooth multiplicative perturbations of
 * randomly chosen true endmembers, blended toward the source until the
 * spectral angle matches the correlation target (always <= 10 degrees).
 */
inline Matrix augment_dictionary(const Matrix& W_true, Index extra,
                                 double correlation, std::uint64_t seed,
                                 std::vector<Index>* sources = nullptr) {
  if (extra < 0)
    throw Error(ErrorCode::DimensionMismatch, "extra must be >= 0");
  const Index L = W_true.rows();
  const Index R = W_true.cols();
  Matrix W(L, R + extra);
  W.leftCols(R) = W_true;

  const double target_angle =
      std::acos(std::clamp(correlation, -1.0, 1.0));
  Rng rng(seed ^ 0xadded1c710ULL);
  for (Index e = 0; e < extra; ++e) {
    const Index src = static_cast<Index>(rng.uniform_index(
        static_cast<std::uint64_t>(R)));
    if (sources) sources->push_back(src);
    // smooth random modulation of the source spectrum
    Vector mod = Vector::Zero(L);
    for (int b = 0; b < 3; ++b) {
      const double amp = rng.uniform(-1.0, 1.0);
      const double mu = rng.uniform(0.0, static_cast<double>(L - 1));
      const double width = rng.uniform(0.1, 0.3) * static_cast<double>(L);
      for (Index l = 0; l < L; ++l) {
        const double z = (static_cast<double>(l) - mu) / width;
        mod[l] += amp * std::exp(-0.5 * z * z);
      }
    }
    // bisect the modulation strength to land on the requested angle
    double lo = 0.0, hi = 1.0;
    Vector cand = W_true.col(src);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      cand = W_true.col(src).array() * (1.0 + mid * mod.array()).max(0.05);
      cand /= std::max(cand.maxCoeff(), 1e-12);
      if (spectral_angle(cand, W_true.col(src)) > target_angle)
        hi = mid;
      else
        lo = mid;
    }
    cand = W_true.col(src).array() * (1.0 + lo * mod.array()).max(0.05);
    cand /= std::max(cand.maxCoeff(), 1e-12);
    W.col(R + e) = cand;
  }
  return W;
}

namespace detail {

inline Vector dirichlet(Rng& rng, const Vector& concentration) {
  Vector out(concentration.size());
  for (Index i = 0; i < out.size(); ++i) out[i] = rng.gamma(concentration[i]);
  const double s = out.sum();
  if (s <= 0.0) return Vector::Constant(out.size(), 1.0 / out.size());
  return out / s;
}

}  // namespace detail

/*
 * Scene protocol: seeded Voronoi patches over the lattice, one class per
 * patch (all classes present), one characteristic Dirichlet abundance
 * profile per class, per-pixel jitter around the profile, exact-SNR white
 * Gaussian noise, and a per-class random training mask.
 */
inline SyntheticScene generate_scene(Index M, Index N, Index L, Index R_true,
                                     int num_classes, double snr_db,
                                     double train_fraction,
                                     std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw Error(ErrorCode::InvalidFraction,
                "train_fraction must lie in (0, 1]");
  const Index P = M * N;
  if (P < num_classes)
    throw Error(ErrorCode::DimensionMismatch, "fewer pixels than classes");

  SyntheticScene scene;
  scene.grid = SpatialGrid(M, N);
  scene.snr_db = snr_db;
  scene.W_true = generate_endmembers(L, R_true, 1.0, seed);

  Rng rng(seed);

  // Voronoi sites; the first C patches take distinct classes so that every
  // class appears, the rest draw uniformly.
  const Index sites = std::max<Index>(num_classes, std::max<Index>(8, P / 64));
  std::vector<Index> site_pixels;
  while (static_cast<Index>(site_pixels.size()) < sites) {
    const Index p = static_cast<Index>(rng.uniform_index(
        static_cast<std::uint64_t>(P)));
    if (std::find(site_pixels.begin(), site_pixels.end(), p) ==
        site_pixels.end())
      site_pixels.push_back(p);
  }
  std::vector<int> site_class(site_pixels.size());
  for (std::size_t i = 0; i < site_pixels.size(); ++i)
    site_class[i] = i < static_cast<std::size_t>(num_classes)
                        ? static_cast<int>(i)
                        : static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(num_classes)));

  scene.class_map.resize(static_cast<std::size_t>(P));
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      const Index p = scene.grid.pixel(m, n);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_site = 0;
      for (std::size_t i = 0; i < site_pixels.size(); ++i) {
        const auto [sm, sn] = scene.grid.coords(site_pixels[i]);
        const double d = static_cast<double>((m - sm) * (m - sm) +
                                             (n - sn) * (n - sn));
        if (d < best) {
          best = d;
          best_site = i;
        }
      }
      scene.class_map[static_cast<std::size_t>(p)] = site_class[best_site];
    }
  }

  // Characteristic abundance profile per class: a Dirichlet draw sharpened
  // on a class-specific dominant endmember, so classes stay separable.
  Matrix profiles(R_true, num_classes);
  for (int c = 0; c < num_classes; ++c) {
    Vector conc = Vector::Constant(R_true, 0.3);
    conc[static_cast<Index>(c) % R_true] = 8.0;
    conc[static_cast<Index>(c + 1) % R_true] = 2.0;
    profiles.col(c) = detail::dirichlet(rng, conc);
  }

  scene.H_true.resize(R_true, P);
  for (Index p = 0; p < P; ++p) {
    const int c = scene.class_map[static_cast<std::size_t>(p)];
    const double brightness = rng.uniform(0.8, 1.2);
    Vector h = profiles.col(c);
    for (Index r = 0; r < R_true; ++r)
      h[r] = std::max(0.0, h[r] + 0.03 * rng.normal());
    scene.H_true.col(p) = brightness * h;
  }

  scene.Y_clean = scene.W_true * scene.H_true;
  if (std::isinf(snr_db)) {
    scene.Y = scene.Y_clean;
  } else {
    Matrix noise(L, P);
    for (Index p = 0; p < P; ++p)
      for (Index l = 0; l < L; ++l) noise(l, p) = rng.normal();
    // scale the realized noise so the measured SNR is exact
    const double scale = scene.Y_clean.norm() / noise.norm() *
                         std::pow(10.0, -snr_db / 20.0);
    scene.Y = scene.Y_clean + scale * noise;
  }

  // per-class training mask
  scene.labels.assign(static_cast<std::size_t>(P), kUnlabeled);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<Index> members;
    for (Index p = 0; p < P; ++p)
      if (scene.class_map[static_cast<std::size_t>(p)] == c) members.push_back(p);
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               train_fraction * static_cast<double>(members.size()))));
    // Fisher-Yates prefix
    for (std::size_t i = 0; i < want && i < members.size(); ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_index(
                  static_cast<std::uint64_t>(members.size() - i)));
      std::swap(members[i], members[j]);
      scene.labels[static_cast<std::size_t>(members[i])] = c;
    }
  }
  return scene;
}

}  // namespace cofact
