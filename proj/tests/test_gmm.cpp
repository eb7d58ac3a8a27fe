#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gdc/gmm.hpp"
#include "oracles.hpp"

namespace {

gdc::ClassGaussian unit_gaussian(std::vector<double> mean, std::string label) {
  const std::size_t d = mean.size();
  return gdc::ClassGaussian(0, std::move(label), std::move(mean), gdc::linalg::LowerTriangular::identity(d), 0.0, 1,
                            0.0);
}

gdc::FloatBlock random_float_block(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double shift = 0.0) {
  std::normal_distribution<float> z(0.0f, 1.0f);
  gdc::FloatBlock b(rows, cols);
  for (float& v : b.data()) v = z(rng) + static_cast<float>(shift);
  return b;
}

/// Posterior by direct exponentiation in long double, no log-sum-exp.
std::vector<double> naive_posterior(const std::vector<double>& log_joint) {
  long double sum = 0;
  for (double v : log_joint) sum += std::exp(static_cast<long double>(v));
  std::vector<double> out;
  for (double v : log_joint) out.push_back(static_cast<double>(std::exp(static_cast<long double>(v)) / sum));
  return out;
}

}  // namespace

TEST(Assemble, UniformPriorsByDefault) {
  const auto m = gdc::assemble({unit_gaussian({0}, "a"), unit_gaussian({1}, "b"), unit_gaussian({2}, "c")});
  ASSERT_EQ(m.size(), 3u);
  for (double p : m.priors()) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(m[i].class_id(), i);
  EXPECT_EQ(m.labels(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(m.find("b"), 1u);
  EXPECT_FALSE(m.find("zzz"));
}

TEST(Assemble, NormalizesSuppliedPriors) {
  const auto m = gdc::assemble({unit_gaussian({0}, "a"), unit_gaussian({1}, "b")}, std::vector<double>{3, 1});
  EXPECT_DOUBLE_EQ(m.priors()[0], 0.75);
  EXPECT_DOUBLE_EQ(m.priors()[1], 0.25);
}

TEST(Assemble, Errors) {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const gdc::Error& e) {
      return e.kind();
    }
    return gdc::ErrorKind::Io;  // sentinel: nothing thrown
  };
  EXPECT_EQ(kind_of([] { gdc::assemble({}); }), gdc::ErrorKind::EmptyInput);
  EXPECT_EQ(kind_of([] { gdc::assemble({unit_gaussian({0}, "a"), unit_gaussian({0, 0}, "b")}); }),
            gdc::ErrorKind::DimensionMismatch);
  EXPECT_EQ(kind_of([] { gdc::assemble({unit_gaussian({0}, "a"), unit_gaussian({1}, "a")}); }),
            gdc::ErrorKind::DuplicateLabel);
  EXPECT_EQ(kind_of([] { gdc::assemble({unit_gaussian({0}, "a"), unit_gaussian({1}, "b")}, std::vector<double>{1, -1}); }),
            gdc::ErrorKind::NegativePrior);
  EXPECT_EQ(kind_of([] { gdc::GdcModel({unit_gaussian({0}, "a")}, {0.5}); }), gdc::ErrorKind::InvalidArgument);
}

TEST(Posterior, SingleClassIsCertain) {
  const auto m = gdc::assemble({unit_gaussian({0, 0}, "only")});
  const auto p = gdc::posterior(m, std::vector<double>{50, -50});
  EXPECT_EQ(p.probs, (std::vector<double>{1.0}));
  EXPECT_EQ(p.predicted, 0u);
}

TEST(Posterior, MidpointIsEvenAndTiesGoToLowestIndex) {
  const auto m = gdc::assemble({unit_gaussian({-1, 0}, "left"), unit_gaussian({1, 0}, "right")});
  const auto p = gdc::posterior(m, std::vector<double>{0, 0});
  EXPECT_DOUBLE_EQ(p.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(p.probs[1], 0.5);
  EXPECT_EQ(p.predicted, 0u);
  EXPECT_EQ(p.top[0].index, 0u);
  EXPECT_EQ(gdc::classify(m, std::vector<double>{0, 0}), 0u);
}

TEST(Posterior, LogisticOfMeanSeparation) {
  // log-odds = (|e - mu_l|^2 - |e - mu_r|^2) / 2 = 2 * 0.5 = 1
  const auto m = gdc::assemble({unit_gaussian({-1, 0}, "left"), unit_gaussian({1, 0}, "right")});
  const auto p = gdc::posterior(m, std::vector<double>{0.5, 0});
  EXPECT_NEAR(p.probs[1], 0.7310585786300049, 1e-12);
  EXPECT_EQ(p.predicted, 1u);
}

TEST(Posterior, ScalingPriorsDoesNotChangeResult) {
  std::vector<gdc::ClassGaussian> cs = {unit_gaussian({0, 0}, "a"), unit_gaussian({1, 1}, "b"),
                                        unit_gaussian({-1, 2}, "c")};
  const auto m1 = gdc::assemble(cs, std::vector<double>{1, 2, 3});
  const auto m2 = gdc::assemble(cs, std::vector<double>{100, 200, 300});
  const std::vector<double> e = {0.3, 0.7};
  const auto p1 = gdc::posterior(m1, e), p2 = gdc::posterior(m2, e);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p1.probs[i], p2.probs[i], 1e-15);
}

TEST(Posterior, MatchesDenseOracleOverRandomModels) {
  std::mt19937_64 rng(1000);
  const std::size_t k = 10, d = 6;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<gdc::ClassGaussian> cs;
    std::vector<oracle::Dense> covs;
    std::vector<double> raw_priors;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> mu(d);
      for (double& v : mu) v = u(rng);
      auto cov = oracle::random_spd(d, rng, 0.5);
      const auto w = gdc::linalg::invert_lower(gdc::linalg::cholesky_factor(gdc::linalg::SymMatrix::from_dense(cov, d)));
      cs.emplace_back(c, "c" + std::to_string(c), mu, w, oracle::invert(cov, d).log_abs_det, 1, 0.0);
      covs.push_back(std::move(cov));
      raw_priors.push_back(0.1 + (u(rng) + 1.0));
    }
    const auto m = gdc::assemble(cs, raw_priors);
    std::vector<double> e(d);
    for (double& v : e) v = 2 * u(rng);
    std::vector<double> lj(k);
    for (std::size_t c = 0; c < k; ++c) {
      const std::vector<double> mu(m[c].mean().begin(), m[c].mean().end());
      lj[c] = std::log(m.priors()[c]) + oracle::log_density(e, mu, covs[c]);
    }
    const auto expected = naive_posterior(lj);
    const auto got = gdc::posterior(m, e);
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      ASSERT_NEAR(got.probs[c], expected[c], 1e-9) << "trial " << trial << " class " << c;
      total += got.probs[c];
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
    const auto best = static_cast<std::size_t>(std::max_element(expected.begin(), expected.end()) - expected.begin());
    // Near-ties may legitimately flip the index, never the winning probability.
    ASSERT_NEAR(got.probs[got.predicted], expected[best], 1e-9);
  }
}

TEST(Posterior, ExtremeLogJointSpreadStaysFinite) {
  const auto p = gdc::posterior_from_log_joint({-1e4, 1e4, 0.0});
  EXPECT_EQ(p.predicted, 1u);
  EXPECT_EQ(p.probs[1], 1.0);
  EXPECT_EQ(p.probs[0], 0.0);
  EXPECT_EQ(p.probs[2], 0.0);
  for (double v : p.probs) EXPECT_TRUE(std::isfinite(v));

  const auto q = gdc::posterior_from_log_joint({-1e4, -1e4 + std::log(3.0)});
  EXPECT_NEAR(q.probs[0], 0.25, 1e-12);
  EXPECT_NEAR(q.probs[1], 0.75, 1e-12);
}

TEST(Posterior, TopKOrderingAndTies) {
  const auto p = gdc::posterior_from_log_joint({0.0, 1.0, 1.0, -2.0, 0.5, 0.5, -9.0}, 5);
  ASSERT_EQ(p.top.size(), 5u);
  std::vector<std::size_t> order;
  for (const auto& r : p.top) order.push_back(r.index);
  EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 4, 5, 0}));
  EXPECT_EQ(gdc::posterior_from_log_joint({1.0, 2.0}, 5).top.size(), 2u);
}

TEST(Posterior, LabelPermutationPermutesProbabilities) {
  std::mt19937_64 rng(77);
  std::vector<gdc::ClassGaussian> cs;
  for (int c = 0; c < 5; ++c) cs.push_back(gdc::fit_class(random_float_block(20, 3, rng, c * 0.5), 1e-6, 0, "l" + std::to_string(c)));
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<gdc::ClassGaussian> permuted;
  for (std::size_t i : perm) permuted.push_back(cs[i]);
  const auto m = gdc::assemble(cs), mp = gdc::assemble(permuted);
  const std::vector<double> e = {0.4, 0.9, 1.1};
  const auto p = gdc::posterior(m, e), pp = gdc::posterior(mp, e);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(pp.probs[i], p.probs[perm[i]], 1e-15);
  EXPECT_EQ(mp[pp.predicted].label(), m[p.predicted].label());
}

TEST(ClassifyBatch, BitwiseEqualToSingleRowScoring) {
  std::mt19937_64 rng(64);
  std::vector<gdc::ClassGaussian> cs;
  for (int c = 0; c < 7; ++c) cs.push_back(gdc::fit_class(random_float_block(30, 16, rng, c * 0.1), 1e-4, 0, "b" + std::to_string(c)));
  const auto m = gdc::assemble(cs);
  for (std::size_t rows : {0u, 1u, 7u, 8u, 9u, 64u}) {
    const auto block = random_float_block(rows, 16, rng);
    const auto batch = gdc::classify_batch(m, block, 3);
    ASSERT_EQ(batch.size(), rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto single = gdc::posterior<float>(m, block.row(r), 3);
      EXPECT_EQ(batch[r].log_joint, single.log_joint) << rows << " " << r;
      EXPECT_EQ(batch[r].probs, single.probs);
      EXPECT_EQ(batch[r].predicted, single.predicted);
      EXPECT_EQ(batch[r].top, single.top);
      EXPECT_EQ(batch[r].predicted, gdc::classify<float>(m, block.row(r)));
    }
  }
}

TEST(ClassifyBatch, DimensionMismatch) {
  const auto m = gdc::assemble({unit_gaussian({0, 0}, "a")});
  try {
    gdc::classify_batch(m, gdc::FloatBlock(2, 3));
    FAIL();
  } catch (const gdc::Error& e) {
    EXPECT_EQ(e.kind(), gdc::ErrorKind::DimensionMismatch);
  }
}

TEST(Classify, RecoversBayesAccuracyOnGaussianData) {
  std::mt19937_64 rng(2024);
  const std::size_t k = 4, d = 3, n_ref = 3000, n_test = 3000;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> mus;
  std::vector<oracle::Dense> covs;
  gdc::EmbeddingArchive refs(d);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> mu(d);
    for (double& v : mu) v = u(rng);
    auto cov = oracle::random_spd(d, rng, 0.2);
    for (double& v : cov) v *= 0.5;
    refs.add_class("k" + std::to_string(c), oracle::gaussian_block<float>(n_ref, mu, cov, rng));
    mus.push_back(mu);
    covs.push_back(cov);
  }
  const auto model = gdc::fit_model(refs, 1e-8);
  std::size_t bayes_hits = 0, model_hits = 0, total = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto test = oracle::gaussian_block<float>(n_test, mus[c], covs[c], rng);
    const auto preds = gdc::classify_batch(model, test, 1);
    for (std::size_t r = 0; r < n_test; ++r) {
      const std::vector<double> e(test.row(r).begin(), test.row(r).end());
      std::size_t best = 0;
      double best_ll = -INFINITY;
      for (std::size_t j = 0; j < k; ++j) {
        const double ll = oracle::log_density(e, mus[j], covs[j]);
        if (ll > best_ll) best_ll = ll, best = j;
      }
      bayes_hits += best == c;
      model_hits += preds[r].predicted == c;
      ++total;
    }
  }
  const double bayes = 100.0 * static_cast<double>(bayes_hits) / static_cast<double>(total);
  const double got = 100.0 * static_cast<double>(model_hits) / static_cast<double>(total);
  EXPECT_LT(bayes, 99.0) << "classes too well separated for a meaningful check";
  EXPECT_NEAR(got, bayes, 1.5);
}

TEST(InjectReal, ReplacesRowsDeterministically) {
  std::mt19937_64 rng(5);
  gdc::EmbeddingArchive refs(2), real(2);
  refs.add_class("a", random_float_block(10, 2, rng, 100.0));
  refs.add_class("b", random_float_block(10, 2, rng, 200.0));
  real.add_class("b", random_float_block(4, 2, rng, -200.0));
  real.add_class("a", random_float_block(4, 2, rng, -100.0));
  const auto out = gdc::inject_real(refs, real, 3, 99);
  EXPECT_EQ(out, gdc::inject_real(refs, real, 3, 99));
  EXPECT_EQ(out.labels(), refs.labels());
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& blk = out[c].block;
    ASSERT_EQ(blk.rows(), 10u);
    const auto& src = real[*real.find(out[c].label)].block;
    std::size_t replaced = 0;
    std::vector<std::size_t> used;
    for (std::size_t r = 0; r < 10; ++r) {
      if (blk.row(r)[0] < 0) {
        ++replaced;
        bool found = false;
        for (std::size_t s = 0; s < src.rows(); ++s)
          if (std::equal(src.row(s).begin(), src.row(s).end(), blk.row(r).begin())) {
            found = true;
            used.push_back(s);
          }
        EXPECT_TRUE(found);
      } else {
        EXPECT_TRUE(std::equal(blk.row(r).begin(), blk.row(r).end(), refs[c].block.row(r).begin()));
      }
    }
    EXPECT_EQ(replaced, 3u);
    std::sort(used.begin(), used.end());
    EXPECT_EQ(std::unique(used.begin(), used.end()), used.end()) << "real rows must be distinct";
  }
  EXPECT_EQ(gdc::inject_real(refs, real, 0, 1), refs);
}

TEST(InjectReal, Errors) {
  std::mt19937_64 rng(6);
  gdc::EmbeddingArchive refs(2), real(2), other(2), wide(3);
  refs.add_class("a", random_float_block(5, 2, rng));
  real.add_class("a", random_float_block(2, 2, rng));
  other.add_class("z", random_float_block(5, 2, rng));
  wide.add_class("a", random_float_block(5, 3, rng));
  auto kind_of = [&](const gdc::EmbeddingArchive& r, std::size_t n) {
    try {
      gdc::inject_real(refs, r, n, 1);
    } catch (const gdc::Error& e) {
      return e.kind();
    }
    return gdc::ErrorKind::Io;
  };
  EXPECT_EQ(kind_of(real, 3), gdc::ErrorKind::InsufficientRealSamples);
  EXPECT_EQ(kind_of(other, 1), gdc::ErrorKind::LabelMismatch);
  EXPECT_EQ(kind_of(wide, 1), gdc::ErrorKind::DimensionMismatch);
}

TEST(Subsample, KeepsSeededRowsInOrder) {
  std::mt19937_64 rng(8);
  gdc::EmbeddingArchive a(1);
  gdc::FloatBlock b(20, 1);
  for (std::size_t i = 0; i < 20; ++i) b(i, 0) = static_cast<float>(i);
  a.add_class("x", b);
  const auto s = gdc::subsample(a, 6, 3);
  EXPECT_EQ(s, gdc::subsample(a, 6, 3));
  ASSERT_EQ(s[0].block.rows(), 6u);
  for (std::size_t i = 1; i < 6; ++i) EXPECT_LT(s[0].block(i - 1, 0), s[0].block(i, 0));
  EXPECT_THROW(gdc::subsample(a, 21, 3), gdc::Error);
}
