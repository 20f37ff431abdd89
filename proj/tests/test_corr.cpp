#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pcgroup/corr.hpp"

using namespace pcgroup;
using oracle::dense_corr;
using oracle::lu_log_det;

namespace {

const GroupModelSpec kExch{Family::exchangeable, false};
const GroupModelSpec kAr1{Family::ar1, false};
const GroupModelSpec kOuUnit{Family::ou, true};

}  // namespace

TEST(CorrMatrix, ExchangeableBaseIsIdentity) {
  const auto r = corr::corr_matrix(kExch, GroupedDesign::balanced(1, 2), 0, 0.0);
  EXPECT_TRUE(r.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

TEST(CorrMatrix, Ar1Toeplitz) {
  const auto r = corr::corr_matrix(kAr1, GroupedDesign::balanced(1, 3), 0, 0.5);
  Eigen::MatrixXd expect(3, 3);
  expect << 1, .5, .25, .5, 1, .5, .25, .5, 1;
  EXPECT_LT((r - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CorrMatrix, OuIrregularPositions) {
  const GroupedDesign d({3}, GroupedDesign::Positions{{0.0, 1.0, 3.0}});
  const auto r = corr::corr_matrix({Family::ou, false}, d, 0, std::log(2.0));
  EXPECT_NEAR(r(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(r(0, 2), 0.125, 1e-15);
  EXPECT_NEAR(r(1, 2), 0.25, 1e-15);
  EXPECT_EQ(r(1, 1), 1.0);
}

TEST(CorrMatrix, Errors) {
  const auto d = GroupedDesign::balanced(2, 3);
  EXPECT_THROW(corr::corr_matrix(kExch, d, 0, 1.5), DomainError);
  EXPECT_THROW(corr::corr_matrix(kExch, d, 0, -0.1), DomainError);
  EXPECT_THROW(corr::corr_matrix({Family::ou, false}, d, 0, 1.0), ConfigError);
  EXPECT_THROW(corr::corr_matrix(kAr1, d, 5, 0.2), ConfigError);
}

TEST(Design, Invariants) {
  EXPECT_THROW(GroupedDesign(std::vector<std::size_t>{}), ConfigError);
  EXPECT_THROW(GroupedDesign({2, 0}), ConfigError);
  EXPECT_THROW(GroupedDesign({2}, GroupedDesign::Positions{{1.0, 1.0}}), ConfigError);
  EXPECT_THROW(GroupedDesign({2}, GroupedDesign::Positions{{1.0}}), ConfigError);
  const GroupedDesign d({3, 4, 3});
  EXPECT_EQ(d.total_size(), 10u);
  EXPECT_FALSE(d.is_balanced());
  EXPECT_TRUE(GroupedDesign::balanced(3, 4).is_balanced());
}

TEST(LogDet, HandExamples) {
  EXPECT_NEAR(corr::log_det(kExch, GroupedDesign::balanced(1, 2), 0.5), std::log(0.75), 1e-15);
  EXPECT_NEAR(corr::log_det(kAr1, GroupedDesign::balanced(1, 3), 0.5), 2.0 * std::log(0.75), 1e-15);
  for (const auto& spec : {kExch, kAr1}) EXPECT_EQ(corr::log_det(spec, GroupedDesign::balanced(3, 5), 0.0), 0.0);
  EXPECT_EQ(corr::log_det(kOuUnit, GroupedDesign::balanced(3, 5), INFINITY), 0.0);
}

TEST(LogDet, DegenerateEndIsMinusInfinity) {
  const auto d = GroupedDesign::balanced(2, 4);
  EXPECT_EQ(corr::log_det(kExch, d, 1.0), -INFINITY);
  EXPECT_EQ(corr::log_det(kAr1, d, 1.0), -INFINITY);
  EXPECT_EQ(corr::log_det(kOuUnit, d, 0.0), -INFINITY);
}

TEST(LogDet, MatchesDenseOracleAllSmallDesigns) {
  double worst = 0.0;
  for (const auto& design : oracle::small_designs(4, 10)) {
    const auto ou_design = oracle::with_irregular_positions(design, 11);
    for (int k = 1; k <= 19; ++k) {
      const double rho = 0.05 * k;
      for (const auto& [spec, d, param] :
           {std::tuple{kExch, design, rho}, std::tuple{kAr1, design, rho},
            std::tuple{kOuUnit, design, -std::log(rho)},
            std::tuple{GroupModelSpec{Family::ou, false}, ou_design, -std::log(rho)}}) {
        double dense = 0.0;
        for (std::size_t j = 0; j < d.n_groups(); ++j) dense += lu_log_det(dense_corr(spec.family, d, j, param));
        worst = std::max(worst, std::abs(corr::log_det(spec, d, param) - dense));
      }
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(LogDet, DenseMethodAgrees) {
  const GroupedDesign d({3, 7, 5});
  for (double rho : {0.1, 0.5, 0.9})
    EXPECT_NEAR(corr::log_det(kAr1, d, rho, corr::Method::dense), corr::log_det(kAr1, d, rho), 1e-10);
}

TEST(LogDet, StrictlyDecreasingInRho) {
  const GroupedDesign d({4, 6, 9});
  for (const auto& spec : {kExch, kAr1}) {
    double prev = corr::log_det(spec, d, 0.0);
    for (int k = 1; k < 1000; ++k) {
      const double cur = corr::log_det(spec, d, k / 1000.0);
      EXPECT_LT(cur, prev);
      prev = cur;
    }
  }
}

TEST(LogDet, SmallRhoAccuracy) {
  // log|R| ~ -k(k+1)/2 rho^2 for the exchangeable model
  const auto d = GroupedDesign::balanced(1, 50);
  const double rho = 1e-6;
  const double k = 49.0;
  const double series = std::log1p(k * rho) + k * std::log1p(-rho);
  EXPECT_NEAR(corr::log_det(kExch, d, rho) / series, 1.0, 1e-6);
  EXPECT_NEAR(corr::log_det(kExch, d, rho) / (-0.5 * k * (k + 1) * rho * rho), 1.0, 1e-4);
}

TEST(Dlogdet, Examples) {
  EXPECT_NEAR(corr::dlogdet_dparam(kExch, GroupedDesign::balanced(1, 2), 1e-12), 0.0, 1e-11);
  EXPECT_NEAR(corr::dlogdet_dparam(kAr1, GroupedDesign::balanced(1, 3), 0.5), -8.0 / 3.0, 1e-14);
  const auto d = GroupedDesign::balanced(6, 50);
  const double h = 1e-6;
  const double fd = (corr::log_det(kExch, d, 0.3 + h) - corr::log_det(kExch, d, 0.3 - h)) / (2 * h);
  EXPECT_NEAR(corr::dlogdet_dparam(kExch, d, 0.3) / fd, 1.0, 1e-6);
}

TEST(Dlogdet, MatchesFiniteDifferenceOfDenseOracle) {
  const GroupedDesign d({2, 5, 10});
  const auto dp = oracle::with_irregular_positions(d, 3);
  const double h = 1e-6;
  for (int k = 1; k <= 19; ++k) {
    const double rho = 0.05 * k;
    for (const auto& [spec, des, param] :
         {std::tuple{kExch, d, rho}, std::tuple{kAr1, d, rho}, std::tuple{kOuUnit, d, -std::log(rho)},
          std::tuple{GroupModelSpec{Family::ou, false}, dp, -std::log(rho)}}) {
      auto dense = [&](double x) {
        double s = 0.0;
        for (std::size_t j = 0; j < des.n_groups(); ++j) s += lu_log_det(dense_corr(spec.family, des, j, x));
        return s;
      };
      const double fd = (dense(param + h) - dense(param - h)) / (2 * h);
      const double an = corr::dlogdet_dparam(spec, des, param);
      EXPECT_NEAR(an / fd, 1.0, 1e-6) << family_name(spec.family) << " param " << param;
      EXPECT_NEAR(corr::dlogdet_dparam(spec, des, param, corr::Method::dense) / an, 1.0, 1e-6);
    }
  }
}

TEST(Dlogdet, ClosedFormsPerGroup) {
  const GroupedDesign d({3, 8});
  const double rho = 0.4;
  double exch = 0.0, ar1 = 0.0;
  for (double m : {3.0, 8.0}) {
    exch += (m - 1) * (1.0 / (1.0 + (m - 1) * rho) - 1.0 / (1.0 - rho));
    ar1 += (m - 1) * (-2.0 * rho) / (1.0 - rho * rho);
  }
  EXPECT_NEAR(corr::dlogdet_dparam(kExch, d, rho), exch, 1e-13);
  EXPECT_NEAR(corr::dlogdet_dparam(kAr1, d, rho), ar1, 1e-13);
  EXPECT_THROW(corr::dlogdet_dparam(kExch, d, 1.0), DomainError);
}

TEST(Precision, Examples) {
  EXPECT_TRUE(corr::precision_matrix(kExch, GroupedDesign::balanced(1, 2), 0, 0.0, 1.0)
                  .isApprox(Eigen::MatrixXd::Identity(2, 2)));
  Eigen::MatrixXd p(3, 3);
  p << 1, -.5, 0, -.5, 1.25, -.5, 0, -.5, 1;
  p /= 0.75;
  EXPECT_LT((corr::precision_matrix(kAr1, GroupedDesign::balanced(1, 3), 0, 0.5, 1.0) - p).cwiseAbs().maxCoeff(),
            1e-14);
  const auto d3 = GroupedDesign::balanced(1, 3);
  const auto q = corr::precision_matrix(kExch, d3, 0, 0.3, 2.0);
  const Eigen::MatrixXd prod = q * dense_corr(Family::exchangeable, d3, 0, 0.3) / 2.0;
  EXPECT_LT((prod - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(corr::precision_matrix(kExch, d3, 0, 1.0, 1.0), DomainError);
  EXPECT_THROW(corr::precision_matrix(kExch, d3, 0, 0.5, 0.0), DomainError);
}

TEST(Precision, TimesCorrelationIsTauIdentity) {
  for (const auto& design : oracle::small_designs(2, 10)) {
    const auto dp = oracle::with_irregular_positions(design, 5);
    for (double rho : {0.05, 0.35, 0.7, 0.95}) {
      const double tau = 2.5;
      for (const auto& [spec, d, param] :
           {std::tuple{kExch, design, rho}, std::tuple{kAr1, design, rho},
            std::tuple{GroupModelSpec{Family::ou, false}, dp, -std::log(rho)}}) {
        for (std::size_t j = 0; j < d.n_groups(); ++j) {
          const auto r = dense_corr(spec.family, d, j, param);
          const Eigen::MatrixXd prod = corr::precision_matrix(spec, d, j, param, tau) * r;
          const auto m = r.rows();
          EXPECT_LT((prod - tau * Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-10);
        }
      }
    }
  }
}

TEST(ApplyInverse, MatchesDenseSolve) {
  const GroupedDesign d({1, 4, 9});
  const auto dp = oracle::with_irregular_positions(d, 8);
  for (const auto& [spec, des, param] :
       {std::tuple{kExch, d, 0.6}, std::tuple{kAr1, d, 0.8}, std::tuple{GroupModelSpec{Family::ou, false}, dp, 0.4}}) {
    for (std::size_t j = 0; j < des.n_groups(); ++j) {
      const auto r = dense_corr(spec.family, des, j, param);
      const Eigen::MatrixXd b = Eigen::MatrixXd::Random(r.rows(), 3);
      Eigen::MatrixXd x = b;
      corr::apply_inverse(spec, des, j, ParamPoint::from_param(spec, param), x);
      EXPECT_LT((r * x - b).cwiseAbs().maxCoeff(), 1e-11);
    }
  }
}

TEST(CorrMatrix, PositiveDefiniteInterior) {
  for (const auto& design : oracle::small_designs(1, 10))
    for (int k = 1; k <= 19; ++k)
      for (const auto& spec : {kExch, kAr1}) {
        Eigen::LLT<Eigen::MatrixXd> llt(corr::corr_matrix(spec, design, 0, 0.05 * k));
        EXPECT_EQ(llt.info(), Eigen::Success);
      }
}
