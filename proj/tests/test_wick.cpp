#include "oracles.hpp"

#include <polysem/dsl.hpp>
#include <polysem/simulate.hpp>
#include <polysem/wick.hpp>

#include <gtest/gtest.h>

using namespace polysem;

namespace {

std::string model_path(const std::string& name) { return std::string(POLYSEM_MODELS_DIR) + "/" + name; }

Polynomial var(const SemModel& m, std::string_view name) { return Polynomial::variable(*free_parameters(m).find(name)); }

Polynomial cov(std::uint32_t i, std::uint32_t j) { return oracle::symbolic_cov(i, j); }

const char* kTwoIndicator = R"(latent exo xi1
manifest x x1 x2
measure x1 = free(l1) * xi1 + err(free(d1))
measure x2 = free(l2) * xi1 + err(free(d2))
cov xi1 xi1 = free(phi)
)";

// Every exponent vector over `symbols` symbols with total degree <= max_degree.
std::vector<std::vector<std::uint32_t>> exponent_vectors(std::uint32_t symbols, std::uint32_t max_degree) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> e(symbols, 0);
  while (true) {
    std::uint32_t total = 0;
    for (auto x : e) total += x;
    if (total <= max_degree) out.push_back(e);
    std::size_t pos = 0;
    while (pos < symbols && ++e[pos] > max_degree) e[pos++] = 0;
    if (pos == symbols) break;
  }
  return out;
}

}  // namespace

TEST(Isserlis, HandExamples) {
  const Polynomial p11 = cov(0, 0), p12 = cov(0, 1), p22 = cov(1, 1);
  EXPECT_TRUE(gaussian_expectation({1}, cov).is_zero());
  EXPECT_EQ(gaussian_expectation({2}, cov), p11);
  EXPECT_EQ(gaussian_expectation({4}, cov), 3 * p11 * p11);
  EXPECT_EQ(gaussian_expectation({2, 2}, cov), p11 * p22 + 2 * p12 * p12);
}

TEST(Isserlis, SixDistinctSymbolsGiveFifteenProducts) {
  const Polynomial e = gaussian_expectation({1, 1, 1, 1, 1, 1}, cov);
  EXPECT_EQ(e.size(), 15u);
  for (const auto& [m, c] : e.terms()) EXPECT_EQ(c, 1);
}

TEST(Isserlis, MatchingCountsAreDoubleFactorials) {
  auto unit = [](std::uint32_t, std::uint32_t) { return Polynomial(1); };
  const std::uint64_t expected[] = {1, 3, 15, 105};
  for (std::uint32_t n = 1; n <= 4; ++n) {
    const std::vector<std::uint32_t> distinct(2 * n, 1);
    EXPECT_EQ(oracle::brute_force_expectation(distinct, cov).count, expected[n - 1]);
    EXPECT_EQ(gaussian_expectation(distinct, unit), Polynomial(Rational(expected[n - 1])));
    EXPECT_EQ(double_factorial_odd(2 * n), expected[n - 1]);
  }
}

TEST(Isserlis, AgreesWithBruteForceUpToDegreeSix) {
  for (const auto& e : exponent_vectors(3, 6)) {
    const auto brute = oracle::brute_force_expectation(e, cov);
    ASSERT_EQ(gaussian_expectation(e, cov), brute.value);
  }
}

TEST(Isserlis, OddDegreeIsExactlyZero) {
  for (const auto& e : exponent_vectors(3, 7)) {
    std::uint32_t total = 0;
    for (auto x : e) total += x;
    if (total % 2 == 1) {
      ASSERT_TRUE(gaussian_expectation(e, cov).is_zero());
    }
  }
}

TEST(Isserlis, MemoizationIsTransparent) {
  IsserlisEvaluator shared(cov);
  const auto all = exponent_vectors(3, 6);
  for (auto it = all.rbegin(); it != all.rend(); ++it) shared.expect(*it);
  for (const auto& e : all) ASSERT_EQ(shared.expect(e), gaussian_expectation(e, cov));
  EXPECT_GT(shared.memo_size(), 0u);
}

TEST(Isserlis, MixedGroupMonomialIsAContractViolation) {
  const RvMonomial mixed = RvMonomial::variable({RvGroup::xi, 0}) * RvMonomial::variable({RvGroup::delta, 0});
  EXPECT_THROW(gaussian_expectation(mixed, cov), std::invalid_argument);
}

TEST(MixedExpectation, IndependenceFactorization) {
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  const RvMonomial xi1 = RvMonomial::variable({RvGroup::xi, 0});
  const RvMonomial d1 = RvMonomial::variable({RvGroup::delta, 0});
  const RvMonomial zeta2 = RvMonomial::variable({RvGroup::zeta, 0}, 2);
  EXPECT_TRUE(engine.mixed_expectation(xi1 * d1).is_zero());
  EXPECT_EQ(engine.mixed_expectation(RvMonomial::variable({RvGroup::delta, 0}, 2)), var(m, "theta_x1"));
  EXPECT_EQ(engine.mixed_expectation(RvMonomial::variable({RvGroup::xi, 0}, 2) * zeta2),
            var(m, "phi11") * var(m, "psi"));
  EXPECT_EQ(engine.mixed_expectation(RvMonomial::variable({RvGroup::zeta, 0}, 4)), 3 * var(m, "psi").pow(2));
}

TEST(ImpliedMoment, LinearTwoIndicator) {
  const SemModel m = parse_model(std::string(kTwoIndicator));
  MomentEngine engine(m);
  const std::vector<std::uint32_t> t12{0, 1}, t11{0, 0};
  EXPECT_EQ(engine.implied_raw_moment(t12), var(m, "l1") * var(m, "l2") * var(m, "phi"));
  EXPECT_EQ(engine.implied_raw_moment(t11), var(m, "l1").pow(2) * var(m, "phi") + var(m, "d1"));
}

TEST(ImpliedMoment, GanzachMeansAndCrossMoments) {
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  const Polynomial mean_y1 =
      var(m, "omega11") * var(m, "phi11") + var(m, "omega12") * var(m, "phi12") + var(m, "omega22") * var(m, "phi22");
  EXPECT_EQ(engine.mean(6), mean_y1);
  const auto truth = theta_from_values(m, true_values(Generator::ganzach));
  EXPECT_NEAR(evaluate(engine.mean(6), truth), 0.98, 1e-15);
  for (std::uint32_t i = 0; i < 6; ++i) EXPECT_TRUE(engine.mean(i).is_zero());

  const std::vector<std::uint32_t> y1x1{6, 0};
  EXPECT_EQ(engine.implied_raw_moment(y1x1), var(m, "gamma1") * var(m, "phi11") + var(m, "gamma2") * var(m, "phi12"));
}

TEST(ImpliedMoment, CovarianceOfEtaIndicatorCarriesBothErrorVariances) {
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  for (auto def : {MomentDefinition::central, MomentDefinition::raw_minus_mean_product}) {
    const std::vector<std::uint32_t> t{6, 6};
    const Polynomial rest = engine.implied_moment(t, def) - var(m, "psi") - var(m, "theta_y1");
    const auto syms = rest.symbols();
    EXPECT_EQ(std::count(syms.begin(), syms.end(), *free_parameters(m).find("psi")), 0);
    EXPECT_EQ(std::count(syms.begin(), syms.end(), *free_parameters(m).find("theta_y1")), 0);
  }
}

TEST(ImpliedTensor, XBlockMatchesLinearStructure) {
  // cov(x_i, x_j) = λ_i λ_j φ(ξ_i, ξ_j) + [i = j] θ_i for every model.
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  const auto sigma = engine.implied_cov_tensor(2);
  for (std::uint32_t i = 0; i < m.m1(); ++i)
    for (std::uint32_t j = i; j < m.m1(); ++j) {
      Polynomial expected;
      for (std::uint32_t a = 0; a < m.k(); ++a)
        for (std::uint32_t b = 0; b < m.k(); ++b)
          expected += m.lambda_x[i][a].as_polynomial() * m.lambda_x[j][b].as_polynomial() * m.phi(a, b).as_polynomial();
      if (i == j) expected += m.theta_delta[i].as_polynomial();
      const std::vector<std::uint32_t> t{i, j};
      EXPECT_EQ(sigma.at(t), expected) << i << "," << j;
    }
}

TEST(ImpliedTensor, LinearModelThirdOrderVanishes) {
  const SemModel m = load_model(model_path("linear_one_factor.sem"));
  MomentEngine engine(m);
  for (auto def : {MomentDefinition::central, MomentDefinition::raw_minus_mean_product}) {
    const auto t = engine.implied_cov_tensor(3, def);
    for (const auto& p : t.entries()) EXPECT_TRUE(p.is_zero());
  }
}

TEST(ImpliedTensor, OrderTwoDoesNotDependOnDefinition) {
  MomentEngine engine(load_model(model_path("ganzach.sem")));
  EXPECT_EQ(engine.implied_cov_tensor(2, MomentDefinition::central),
            engine.implied_cov_tensor(2, MomentDefinition::raw_minus_mean_product));
}

TEST(ImpliedTensor, CentralThirdOrderExpandsFromRawMoments) {
  // E∏(z−μ) = E(abc) − μa E(bc) − μb E(ac) − μc E(ab) + 2 μa μb μc.
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  const auto central = engine.implied_cov_tensor(3, MomentDefinition::central);
  for (const auto& t : central.tuples()) {
    const std::uint32_t a = t[0], b = t[1], c = t[2];
    auto raw2 = [&](std::uint32_t i, std::uint32_t j) {
      const std::vector<std::uint32_t> p{i, j};
      return engine.implied_raw_moment(p);
    };
    const Polynomial expected = engine.implied_raw_moment(t) - engine.mean(a) * raw2(b, c) -
                                engine.mean(b) * raw2(a, c) - engine.mean(c) * raw2(a, b) +
                                2 * engine.mean(a) * engine.mean(b) * engine.mean(c);
    ASSERT_EQ(central.at(t), expected);
  }
}

TEST(ImpliedTensor, RawDefinitionSubtractsProductOfMeans) {
  const SemModel m = load_model(model_path("ganzach.sem"));
  MomentEngine engine(m);
  const auto raw = engine.implied_cov_tensor(3, MomentDefinition::raw_minus_mean_product);
  const std::vector<std::uint32_t> t{6, 7, 8};
  EXPECT_EQ(raw.at(t), engine.implied_raw_moment(t) - engine.mean(6) * engine.mean(7) * engine.mean(8));
}

TEST(ImpliedTensor, CovarianceIsPositiveSemidefiniteAtTruth) {
  for (auto g : {Generator::ganzach, Generator::interaction}) {
    const SemModel m = generator_model(g);
    MomentEngine engine(m);
    const auto sigma = engine.implied_cov_tensor(2);
    const auto theta = theta_from_values(m, true_values(g));
    Eigen::MatrixXd s(m.m(), m.m());
    for (std::uint32_t i = 0; i < m.m(); ++i)
      for (std::uint32_t j = 0; j < m.m(); ++j) {
        const std::vector<std::uint32_t> t{i, j};
        s(i, j) = evaluate(sigma.at(t), theta);
      }
    EXPECT_EQ(s, s.transpose());
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(ImpliedTensor, ParallelEqualsSerial) {
  for (auto g : {Generator::ganzach, Generator::interaction}) {
    MomentEngine serial(generator_model(g));
    MomentEngine parallel(generator_model(g));
    for (std::uint32_t k : {2u, 3u})
      for (auto def : {MomentDefinition::central, MomentDefinition::raw_minus_mean_product})
        EXPECT_EQ(serial.implied_cov_tensor(k, def, 1), parallel.implied_cov_tensor(k, def, 4));
  }
}

TEST(ImpliedTensor, RejectsOrderBelowTwo) {
  MomentEngine engine(load_model(model_path("linear_one_factor.sem")));
  EXPECT_THROW(engine.implied_cov_tensor(1), std::invalid_argument);
}

TEST(Tensor, CanonicalLayoutAndOrbits) {
  EXPECT_EQ(canonical_count(12, 3), 364u);
  EXPECT_EQ(canonical_tuples(3, 2).size(), 6u);
  const std::vector<std::uint32_t> t{0, 0, 1};
  EXPECT_EQ(orbit_size(t), 3u);
  const std::vector<std::uint32_t> u{0, 1, 2};
  EXPECT_EQ(orbit_size(u), 6u);
  MomentTensor<double> s(4, 3);
  for (std::size_t r = 0; r < s.size(); ++r) s.entries()[r] = static_cast<double>(r);
  const std::vector<std::uint32_t> p1{2, 0, 3}, p2{3, 2, 0}, c{0, 2, 3};
  EXPECT_EQ(s.at(p1), s.at(c));
  EXPECT_EQ(s.at(p2), s.at(c));
  const auto tuples = s.tuples();
  for (std::size_t r = 0; r < tuples.size(); ++r) EXPECT_EQ(s.rank(tuples[r]), r);
}
