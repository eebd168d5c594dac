#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "bzsl/ppd.hpp"

using namespace bzsl;

namespace {

struct Fixture {
  std::vector<ClassStats> stats;
  std::vector<const ClassStats*> support;
  GlobalPrior prior;
  Hyperparams hp;
};

Vector random_vec(std::mt19937_64& gen, int dim, double scale = 1.0) {
  std::normal_distribution<double> noise(0.0, scale);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = noise(gen);
  return v;
}

ClassStats random_stats(std::mt19937_64& gen, int dim, int max_count = 20) {
  std::uniform_int_distribution<int> count_dist(1, max_count);
  const int n = count_dist(gen);
  Matrix rows(n, dim);
  for (int r = 0; r < n; ++r) rows.row(r) = random_vec(gen, dim, 2.0).transpose();
  return class_stats(rows);
}

DiagMetaPosterior meta_posterior_diag(const std::vector<const DiagStats*>& sup,
                                      const DiagGlobalPrior& prior, const Hyperparams& hp,
                                      const DiagStats& cur) {
  return bzsl::meta_posterior_diag(sup, prior, hp, &cur);
}

Fixture random_fixture(std::mt19937_64& gen, int dim, int n_support) {
  Fixture fx;
  fx.stats.reserve(static_cast<std::size_t>(n_support));
  for (int i = 0; i < n_support; ++i) fx.stats.push_back(random_stats(gen, dim));
  for (const auto& st : fx.stats) fx.support.push_back(&st);
  const Matrix a = Matrix::NullaryExpr(dim, dim, [&](Eigen::Index, Eigen::Index) {
    return std::normal_distribution<double>(0.0, 1.0)(gen);
  });
  fx.prior.sigma0 = a * a.transpose() + Matrix::Identity(dim, dim);
  fx.prior.mu0 = random_vec(gen, dim);
  std::uniform_real_distribution<double> unif(0.1, 5.0);
  fx.hp.kappa0 = unif(gen);
  fx.hp.kappa1 = unif(gen);
  fx.hp.m = dim + 2.0 + unif(gen);
  fx.hp.s = 1.0;
  return fx;
}

}  // namespace

TEST_CASE("global prior means and scaled covariance") {
  std::map<int, ClassStats> stats;
  Matrix rows_a(2, 2), rows_b(2, 2);
  rows_a << -1, -1, 1, 1;  // mean (0,0)
  rows_b << 1, 1, 3, 3;    // mean (2,2)
  stats[0] = class_stats(rows_a);
  stats[1] = class_stats(rows_b);
  const GlobalPrior prior = global_prior(stats, 1.0);
  REQUIRE(prior.mu0(0) == Catch::Approx(1.0));
  REQUIRE(prior.mu0(1) == Catch::Approx(1.0));
}

TEST_CASE("global prior with a single identity-covariance class and s=5") {
  std::map<int, ClassStats> stats;
  ClassStats st;
  st.mean = Vector::Zero(2);
  st.scatter = 3.0 * Matrix::Identity(2, 2);  // n-1 = 3 -> covariance I
  st.count = 4;
  stats[0] = st;
  const GlobalPrior prior = global_prior(stats, 5.0);
  REQUIRE((prior.sigma0 - 5.0 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("global prior matches a direct covariance-averaging oracle") {
  std::mt19937_64 gen(3);
  std::map<int, ClassStats> stats;
  for (int i = 0; i < 10; ++i) stats[i] = random_stats(gen, 3, 15);
  const double s = 2.5;
  const GlobalPrior prior = global_prior(stats, s);

  Matrix avg = Matrix::Zero(3, 3);
  long used = 0;
  for (const auto& [id, st] : stats) {
    if (st.count < 2) continue;
    avg += st.scatter / static_cast<double>(st.count - 1);
    ++used;
  }
  avg = s * avg / static_cast<double>(used);
  REQUIRE((prior.sigma0 - avg).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("global prior with only singleton classes errors") {
  std::map<int, ClassStats> stats;
  ClassStats st;
  st.mean = Vector::Zero(2);
  st.scatter = Matrix::Zero(2, 2);
  st.count = 1;
  stats[0] = st;
  REQUIRE_THROWS_AS(global_prior(stats, 1.0), ValidationError);
  // The scatter reading keeps singletons in the average.
  REQUIRE_NOTHROW(global_prior(stats, 1.0, Sigma0Mode::kScatter));
}

TEST_CASE("meta posterior hand arithmetic: single support class") {
  ClassStats st;
  st.mean = Vector::Constant(1, 4.0);
  st.scatter = Matrix::Zero(1, 1);
  st.count = 1;
  GlobalPrior prior;
  prior.mu0 = Vector::Zero(1);
  prior.sigma0 = Matrix::Identity(1, 1);
  Hyperparams hp;
  hp.kappa0 = 0.1;
  hp.kappa1 = 1.0;
  const MetaPosterior mp = meta_posterior({&st}, prior, hp);
  // w = 1*1/(1+1) = 0.5, kappa_bar = 0.6, kappa_tilde = 0.6/1.6 = 0.375
  REQUIRE(mp.kappa_bar == Catch::Approx(0.6));
  REQUIRE(mp.kappa_tilde == Catch::Approx(0.375));
  REQUIRE(mp.mu_bar(0) == Catch::Approx(0.5 * 4.0 / 0.6));
}

TEST_CASE("meta posterior is dominated by the prior as kappa0 grows") {
  std::mt19937_64 gen(7);
  Fixture fx = random_fixture(gen, 3, 4);
  fx.hp.kappa0 = 1e12;
  const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp);
  REQUIRE((mp.mu_bar - fx.prior.mu0).norm() / fx.prior.mu0.norm() < 1e-6);
}

TEST_CASE("meta posterior with symmetric support and kappa0 = 0") {
  ClassStats a, b;
  a.mean = Vector::Constant(2, 1.0);
  b.mean = Vector::Constant(2, 3.0);
  a.scatter = b.scatter = Matrix::Zero(2, 2);
  a.count = b.count = 5;
  GlobalPrior prior;
  prior.mu0 = Vector::Constant(2, 100.0);
  prior.sigma0 = Matrix::Identity(2, 2);
  Hyperparams hp;
  hp.kappa0 = 0.0;  // op accepts it even though fit validation would not
  hp.kappa1 = 2.0;
  const MetaPosterior mp = meta_posterior({&a, &b}, prior, hp);
  REQUIRE(mp.mu_bar(0) == Catch::Approx(2.0));
  REQUIRE(mp.mu_bar(1) == Catch::Approx(2.0));
}

TEST_CASE("kappa_tilde is below kappa1 and kappa_bar; weights form a convex combination") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 1000; ++trial) {
    Fixture fx = random_fixture(gen, 2, 1 + trial % 5);
    const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp);
    REQUIRE(mp.kappa_tilde < std::min(fx.hp.kappa1, mp.kappa_bar));
    // mu_bar lies inside the per-coordinate hull of support means and mu0.
    for (int d = 0; d < 2; ++d) {
      double lo = fx.prior.mu0(d), hi = fx.prior.mu0(d);
      for (const auto* st : fx.support) {
        lo = std::min(lo, st->mean(d));
        hi = std::max(hi, st->mean(d));
      }
      REQUIRE(mp.mu_bar(d) >= lo - 1e-12);
      REQUIRE(mp.mu_bar(d) <= hi + 1e-12);
    }
  }
}

TEST_CASE("adding a duplicate support class increases kappa_bar") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 1000; ++trial) {
    Fixture fx = random_fixture(gen, 2, 3);
    const MetaPosterior before = meta_posterior(fx.support, fx.prior, fx.hp);
    auto extended = fx.support;
    extended.push_back(fx.support.back());
    const MetaPosterior after = meta_posterior(extended, fx.prior, fx.hp);
    REQUIRE(after.kappa_bar > before.kappa_bar);
  }
}

TEST_CASE("seen ppd location converges to the sample mean for huge counts") {
  std::mt19937_64 gen(17);
  Fixture fx = random_fixture(gen, 3, 3);
  ClassStats cur = random_stats(gen, 3);
  cur.count = 1000000000L;
  const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp, &cur);
  const ClassPpd ppd = seen_ppd(cur, mp, fx.prior, fx.hp, 0);
  REQUIRE((ppd.t.location() - cur.mean).norm() < 1e-6);
}

TEST_CASE("seen ppd one-dimensional hand example") {
  // n=2, kappa_tilde=1, sample mean 0, mu_bar 3 -> location (2*0 + 1*3)/3 = 1.
  ClassStats cur;
  cur.mean = Vector::Zero(1);
  cur.scatter = Matrix::Zero(1, 1);
  cur.count = 2;
  MetaPosterior mp;
  mp.mu_bar = Vector::Constant(1, 3.0);
  mp.kappa_bar = 2.0;
  mp.kappa_tilde = 1.0;
  mp.scatter_sum = Matrix::Zero(1, 1);
  mp.count_sum = 4;
  mp.support_count = 2;
  mp.s_mu = Matrix::Zero(1, 1);
  GlobalPrior prior;
  prior.mu0 = Vector::Zero(1);
  prior.sigma0 = Matrix::Identity(1, 1);
  Hyperparams hp;
  hp.m = 3.0;
  const ClassPpd ppd = seen_ppd(cur, mp, prior, hp, 0);
  REQUIRE(ppd.t.location()(0) == Catch::Approx(1.0));
}

TEST_CASE("seen ppd location sits strictly between sample mean and meta mean") {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 1000; ++trial) {
    Fixture fx = random_fixture(gen, 2, 3);
    const ClassStats cur = random_stats(gen, 2);
    const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp, &cur);
    const ClassPpd ppd = seen_ppd(cur, mp, fx.prior, fx.hp, 0);
    for (int d = 0; d < 2; ++d) {
      const double lo = std::min(cur.mean(d), mp.mu_bar(d));
      const double hi = std::max(cur.mean(d), mp.mu_bar(d));
      if (hi - lo < 1e-9) continue;
      REQUIRE(ppd.t.location()(d) > lo);
      REQUIRE(ppd.t.location()(d) < hi);
    }
  }
}

TEST_CASE("unseen ppd equals seen ppd with a phantom empty class, exactly") {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 100; ++trial) {
    Fixture fx = random_fixture(gen, 3, 1 + trial % 6);
    const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp, nullptr);
    const ClassPpd unseen = unseen_ppd(mp, fx.prior, fx.hp, 9);

    ClassStats phantom;
    phantom.mean = random_vec(gen, 3);  // arbitrary; weight is zero
    phantom.scatter = Matrix::Zero(3, 3);
    phantom.count = 0;
    const ClassPpd via_seen = seen_ppd(phantom, with_current(mp, phantom), fx.prior, fx.hp, 9);

    REQUIRE(unseen.t.dof() == via_seen.t.dof());
    REQUIRE(unseen.t.location() == via_seen.t.location());
    REQUIRE(unseen.t.scale_cholesky() == via_seen.t.scale_cholesky());
  }
}

TEST_CASE("unseen ppd dof from the counting formula") {
  // Two support classes of 10 samples each, m = D + 2 -> dof = 18 + 3 = 21.
  for (int dim : {1, 2, 5, 9}) {
    std::mt19937_64 gen(29);
    Matrix rows(10, dim);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int r = 0; r < 10; ++r) {
      for (int c = 0; c < dim; ++c) rows(r, c) = noise(gen);
    }
    const ClassStats a = class_stats(rows);
    const ClassStats b = class_stats(rows * 0.5);
    GlobalPrior prior;
    prior.mu0 = Vector::Zero(dim);
    prior.sigma0 = Matrix::Identity(dim, dim);
    Hyperparams hp;
    hp.m = dim + 2.0;
    const MetaPosterior mp = meta_posterior({&a, &b}, prior, hp);
    const ClassPpd ppd = unseen_ppd(mp, prior, hp, 0);
    REQUIRE(ppd.t.dof() == Catch::Approx(21.0));
  }
}

TEST_CASE("unseen ppd scale is quadratic in a feature rescale") {
  std::mt19937_64 gen(31);
  Fixture fx = random_fixture(gen, 2, 3);
  const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp);
  const ClassPpd base = unseen_ppd(mp, fx.prior, fx.hp, 0);

  std::vector<ClassStats> scaled = fx.stats;
  for (auto& st : scaled) {
    st.mean *= 2.0;
    st.scatter *= 4.0;
  }
  std::vector<const ClassStats*> scaled_ptrs;
  for (const auto& st : scaled) scaled_ptrs.push_back(&st);
  GlobalPrior scaled_prior = fx.prior;
  scaled_prior.mu0 *= 2.0;
  scaled_prior.sigma0 *= 4.0;
  const MetaPosterior mp2 = meta_posterior(scaled_ptrs, scaled_prior, fx.hp);
  const ClassPpd scaled_ppd = unseen_ppd(mp2, scaled_prior, fx.hp, 0);
  const Matrix ratio = scaled_ppd.t.scale().cwiseQuotient(base.t.scale());
  REQUIRE((ratio.array() - 4.0).abs().maxCoeff() < 1e-8);
}

TEST_CASE("dof stays positive whenever m >= D + 2 and supports are non-empty") {
  std::mt19937_64 gen(37);
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = 1 + trial % 4;
    Fixture fx = random_fixture(gen, dim, 1 + trial % 5);
    const ClassStats cur = random_stats(gen, dim);
    const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp, &cur);
    const ClassPpd seen = seen_ppd(cur, mp, fx.prior, fx.hp, 0);
    const ClassPpd unseen = unseen_ppd(mp, fx.prior, fx.hp, 1);
    REQUIRE(seen.t.dof() > 0.0);
    REQUIRE(unseen.t.dof() > 0.0);
    // Both constructions carried a successful Cholesky of a PD scale.
    REQUIRE(seen.t.scale_cholesky().diagonal().minCoeff() > 0.0);
    REQUIRE(unseen.t.scale_cholesky().diagonal().minCoeff() > 0.0);
  }
}

TEST_CASE("dof misconfiguration raises a numerical error") {
  std::mt19937_64 gen(41);
  Fixture fx = random_fixture(gen, 3, 2);
  fx.hp.m = -100.0;  // drives the dof negative
  const MetaPosterior mp = meta_posterior(fx.support, fx.prior, fx.hp);
  REQUIRE_THROWS_AS(unseen_ppd(mp, fx.prior, fx.hp, 0), NumericalError);
}

TEST_CASE("constrained and unconstrained agree in one dimension") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> unif(0.2, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    // Shared random one-dimensional statistics.
    std::vector<ClassStats> full_stats;
    std::vector<DiagStats> diag_stats;
    const int n_support = 1 + trial % 4;
    for (int i = 0; i < n_support; ++i) {
      const ClassStats st = random_stats(gen, 1);
      full_stats.push_back(st);
      diag_stats.push_back(to_diag(st));
    }
    std::vector<const ClassStats*> full_ptr;
    std::vector<const DiagStats*> diag_ptr;
    for (const auto& st : full_stats) full_ptr.push_back(&st);
    for (const auto& st : diag_stats) diag_ptr.push_back(&st);

    const double m = 3.0 + unif(gen);
    const double sigma0 = unif(gen);
    Hyperparams hp;
    hp.kappa0 = unif(gen);
    hp.kappa1 = unif(gen);
    hp.m = m;
    GlobalPrior prior;
    prior.mu0 = Vector::Constant(1, unif(gen) - 2.0);
    prior.sigma0 = Matrix::Constant(1, 1, sigma0);

    Hyperparams hp_diag = hp;
    hp_diag.a0 = m / 2.0;  // the inverse-Gamma correspondence
    hp_diag.b0 = sigma0 / 2.0;
    DiagGlobalPrior dprior;
    dprior.mu0 = prior.mu0;
    dprior.sigma0 = Vector::Constant(1, 2.0 * hp_diag.b0);

    const ClassStats cur = random_stats(gen, 1);
    const MetaPosterior mp = meta_posterior(full_ptr, prior, hp, &cur);
    const DiagMetaPosterior dmp = meta_posterior_diag(diag_ptr, dprior, hp_diag, to_diag(cur));

    const ClassPpd full_seen = seen_ppd(cur, mp, prior, hp, 0);
    const ClassPpd diag_seen = seen_ppd_diag(to_diag(cur), dmp, dprior, hp_diag, 0);
    REQUIRE(std::abs(full_seen.t.location()(0) - diag_seen.t.location()(0)) < 1e-10);
    Vector x(1);
    x << unif(gen) - 2.0;
    REQUIRE(std::abs(student_t_logpdf(x, full_seen.t) - student_t_logpdf(x, diag_seen.t)) <
            1e-10);

    const ClassPpd full_unseen = unseen_ppd(mp, prior, hp, 1);
    const ClassPpd diag_unseen = unseen_ppd_diag(dmp, dprior, hp_diag, 1);
    REQUIRE(std::abs(student_t_logpdf(x, full_unseen.t) - student_t_logpdf(x, diag_unseen.t)) <
            1e-10);
  }
}

TEST_CASE("axis-aligned three-dimensional diagonal run equals three univariate full runs") {
  std::mt19937_64 gen(47);
  std::uniform_real_distribution<double> unif(0.3, 3.0);
  const double a0 = 2.0, b0 = 0.7;

  std::vector<DiagStats> diag_stats;
  std::vector<std::vector<ClassStats>> axis_stats(3);
  for (int i = 0; i < 3; ++i) {
    Matrix rows(6, 3);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 3; ++c) rows(r, c) = noise(gen) * (c + 1);
    }
    diag_stats.push_back(class_stats_diag(rows));
    for (int axis = 0; axis < 3; ++axis) {
      axis_stats[static_cast<std::size_t>(axis)].push_back(class_stats(rows.col(axis)));
    }
  }
  std::vector<const DiagStats*> diag_ptr;
  for (const auto& st : diag_stats) diag_ptr.push_back(&st);

  Hyperparams hp;
  hp.kappa0 = unif(gen);
  hp.kappa1 = unif(gen);
  hp.a0 = a0;
  hp.b0 = b0;
  hp.m = 2.0 * a0;
  DiagGlobalPrior dprior;
  dprior.mu0 = Vector::Zero(3);
  dprior.sigma0 = Vector::Constant(3, 2.0 * b0);

  Matrix cur_rows(5, 3);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 3; ++c) cur_rows(r, c) = noise(gen);
  }
  const DiagStats cur = class_stats_diag(cur_rows);
  const DiagMetaPosterior dmp = meta_posterior_diag(diag_ptr, dprior, hp, cur);
  const ClassPpd diag_ppd = seen_ppd_diag(cur, dmp, dprior, hp, 0);

  Vector x(3);
  x << 0.3, -0.7, 1.2;
  double axis_total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<const ClassStats*> sup;
    for (const auto& st : axis_stats[static_cast<std::size_t>(axis)]) sup.push_back(&st);
    GlobalPrior prior1;
    prior1.mu0 = Vector::Zero(1);
    prior1.sigma0 = Matrix::Constant(1, 1, 2.0 * b0);
    Hyperparams hp1 = hp;
    hp1.a0 = 0.0;
    hp1.b0 = 0.0;
    hp1.m = 2.0 * a0;
    const ClassStats cur1 = class_stats(cur_rows.col(axis));
    const MetaPosterior mp1 = meta_posterior(sup, prior1, hp1, &cur1);
    const ClassPpd ppd1 = seen_ppd(cur1, mp1, prior1, hp1, 0);
    axis_total += student_t_logpdf(x.segment(axis, 1), ppd1.t);
  }
  REQUIRE(std::abs(student_t_logpdf(x, diag_ppd.t) - axis_total) < 1e-10);
}

TEST_CASE("constrained dof error surfaces for invalid a0") {
  std::mt19937_64 gen(53);
  std::vector<DiagStats> stats{to_diag(random_stats(gen, 2))};
  std::vector<const DiagStats*> ptrs{&stats[0]};
  Hyperparams hp;
  hp.kappa0 = 0.5;
  hp.kappa1 = 1.0;
  // Drive 2*a0 below the counting terms so the per-axis dof is negative.
  const double nm1 = static_cast<double>(stats[0].count - 1);
  hp.a0 = -(nm1 + 1.0);
  hp.b0 = 1.0;
  DiagGlobalPrior prior;
  prior.mu0 = Vector::Zero(2);
  prior.sigma0 = Vector::Constant(2, 2.0);
  const DiagMetaPosterior mp = meta_posterior_diag(ptrs, prior, hp, nullptr);
  REQUIRE_THROWS_AS(unseen_ppd_diag(mp, prior, hp, 0), NumericalError);
}
