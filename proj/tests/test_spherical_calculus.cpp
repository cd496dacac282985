#include "conclab/spherical_calculus.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace conclab;

namespace {

Vector random_vector(int n, CounterRng& rng) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// Hand-derived Hessian of f(x) = (a.x)(b.x)/|x|.
Matrix bilinear_hessian(const Vector& a, const Vector& b, const Vector& x) {
  const double r = x.norm();
  const double ax = a.dot(x), bx = b.dot(x);
  const double g = ax * bx;
  const Vector h = ax * b + bx * a;
  const int n = static_cast<int>(x.size());
  return (a * b.transpose() + b * a.transpose()) / r - (h * x.transpose() + x * h.transpose()) / std::pow(r, 3) -
         g * Matrix::Identity(n, n) / std::pow(r, 3) + 3 * g * x * x.transpose() / std::pow(r, 5);
}

}  // namespace

TEST(TestFunctions, HomogeneityAndEuler) {
  CounterRng rng(1, StreamDomain::calculus, 0);
  const int n = 5;
  Matrix dirs(n, 3);
  for (int k = 0; k < 3; ++k) dirs.col(k) = random_vector(n, rng);
  Vector c(3);
  c << 0.5, 1.5, 2.0;
  const std::vector<HomogeneousTestFunction> fs = {
      HomogeneousTestFunction::linear(random_vector(n, rng)), HomogeneousTestFunction::norm(n),
      HomogeneousTestFunction::bilinear(random_vector(n, rng), random_vector(n, rng)),
      HomogeneousTestFunction::quadratic(random_vector(n, rng)), HomogeneousTestFunction::quadratic_mixture(c, dirs)};
  for (const auto& f : fs) {
    for (int k = 0; k < 10; ++k) {
      const Vector x = random_vector(n, rng);
      const Vector th = x.normalized();
      for (double t : {0.3, 2.0, 17.0}) EXPECT_NEAR(f(t * x), t * f(x), 1e-10 * (1 + std::abs(t * f(x))));
      EXPECT_NEAR(euclidean_grad_fd(f, th).dot(th), f(th), 1e-7) << f.family();
      EXPECT_LT((euclidean_hessian_fd(f, th) * th).norm(), 1e-5) << f.family();
    }
  }
}

TEST(FiniteDifferences, LinearAndNorm) {
  CounterRng rng(2, StreamDomain::calculus, 0);
  const int n = 6;
  const Vector a = random_vector(n, rng);
  const auto lin = HomogeneousTestFunction::linear(a);
  const auto nrm = HomogeneousTestFunction::norm(n);
  for (int k = 0; k < 10; ++k) {
    const Vector th = uniform_sphere_point(n, rng);
    const Matrix p = Matrix::Identity(n, n) - th * th.transpose();
    EXPECT_LT((spherical_hessian_fd(lin, th) + a.dot(th) * p).norm(), 1e-6);
    EXPECT_LT(spherical_grad_fd(nrm, th).norm(), 1e-8);
    EXPECT_LT(spherical_hessian_fd(nrm, th).norm(), 1e-6);
  }
  EXPECT_THROW(spherical_hessian_fd(lin, Vector::Ones(n).normalized(), 0.1), DomainError);
}

TEST(FiniteDifferences, BilinearMatchesClosedForm) {
  CounterRng rng(3, StreamDomain::calculus, 0);
  const int n = 7;
  for (int k = 0; k < 10; ++k) {
    const Vector a = random_vector(n, rng), b = random_vector(n, rng);
    const Vector th = uniform_sphere_point(n, rng);
    const auto f = HomogeneousTestFunction::bilinear(a, b);
    const Matrix exact = bilinear_hessian(a, b, th);
    EXPECT_LT((euclidean_hessian_fd(f, th) - exact).cwiseAbs().maxCoeff(), 1e-5);
    const Vector grad = (a.dot(th)) * b + (b.dot(th)) * a - a.dot(th) * b.dot(th) * th;
    EXPECT_LT((spherical_hessian_fd(f, th) - spherical_hessian_from(th, grad, exact)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(FiniteDifferences, RichardsonRatio) {
  CounterRng rng(4, StreamDomain::calculus, 0);
  const int n = 4;
  const auto f = HomogeneousTestFunction::bilinear(random_vector(n, rng), random_vector(n, rng));
  const Vector th = uniform_sphere_point(n, rng);
  const Matrix h1 = spherical_hessian_fd(f, th, 1e-2);
  const Matrix h2 = spherical_hessian_fd(f, th, 5e-3);
  const Matrix h3 = spherical_hessian_fd(f, th, 2.5e-3);
  const double ratio = (h1 - h2).norm() / (h2 - h3).norm();
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(SecondOrderIdentity, LinearClosedForm) {
  CounterRng rng(5, StreamDomain::calculus, 0);
  const int n = 5;
  const Vector a = uniform_sphere_point(n, rng);
  const auto r = check_second_order_identity(HomogeneousTestFunction::linear(a), 20000, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_LE(std::abs(r.lhs - (n - 1.0) / n), 4 * r.std_err + 0.05);
}

TEST(SecondOrderIdentity, NormIsExact) {
  const auto r = check_second_order_identity(HomogeneousTestFunction::norm(6), 5000, 2);
  EXPECT_NEAR(r.lhs, 0.0, 1e-6);
  EXPECT_NEAR(r.rhs, 0.0, 1e-5);
  EXPECT_TRUE(r.pass);
}

TEST(SecondOrderIdentity, Bilinear) {
  CounterRng rng(6, StreamDomain::calculus, 0);
  const int n = 6;
  const auto f = HomogeneousTestFunction::bilinear(random_vector(n, rng), random_vector(n, rng));
  const auto r = check_second_order_identity(f, 20000, 3);
  EXPECT_TRUE(r.pass) << r.difference << " se " << r.std_err;
  EXPECT_GT(r.std_err, 0.0);
}

TEST(PairReweighting, NormalizationAndMoment) {
  const auto r = check_lemma_rand(10, 100000, 4);
  EXPECT_FALSE(r.flagged);
  EXPECT_TRUE(r.normalization_pass);
  EXPECT_TRUE(r.normalization_se_pass);
  EXPECT_TRUE(r.moment_pass);
  EXPECT_DOUBLE_EQ(r.second_moment_target, 1.0 / 9.0);
  EXPECT_TRUE(check_lemma_rand(3, 1000, 4).flagged);
  EXPECT_THROW(check_lemma_rand(2, 1000, 4), DomainError);
  const auto tampered = check_lemma_rand(10, 100000, 4, 1.01);
  EXPECT_FALSE(tampered.normalization_se_pass && tampered.moment_pass);
}

TEST(PairReweighting, QuadratureNormalization) {
  for (int n = 3; n <= 64; ++n) EXPECT_NEAR(omega_quadrature_normalization(n), 1.0, 1e-10) << n;
}

TEST(SecondOrderPoincare, EvenFunctions) {
  CounterRng rng(7, StreamDomain::calculus, 0);
  const auto q = second_order_poincare_check(HomogeneousTestFunction::quadratic(random_vector(5, rng)), 20000, 5);
  EXPECT_TRUE(q.pass);
  EXPECT_LE(q.ratio, 1.0 + 4 * q.std_err / q.bound);
  const auto c = second_order_poincare_check(HomogeneousTestFunction::norm(5), 2000, 5);
  EXPECT_NEAR(c.variance, 0.0, 1e-20);
  EXPECT_NEAR(c.bound, 0.0, 1e-10);
  EXPECT_TRUE(c.pass);
  const int n = 8;
  Matrix dirs(n, 4);
  for (int k = 0; k < 4; ++k) dirs.col(k) = random_vector(n, rng);
  Vector w(4);
  w << 0.2, 1.0, 0.7, 0.4;
  const auto m = second_order_poincare_check(HomogeneousTestFunction::quadratic_mixture(w, dirs), 20000, 6);
  EXPECT_TRUE(m.pass);
  EXPECT_LE(m.ratio, 1.0 + 4 * m.std_err / m.bound);
}

TEST(Expansions, RemaindersAndCoefficients) {
  const double phi_rem = phi_quartic_remainder();
  EXPECT_LE(phi_rem, 0.02);
  EXPECT_GE(phi_rem, 0.0125);
  EXPECT_LE(psi_cubic_remainder(), 0.1);
  EXPECT_GT(psi_cubic_remainder(1.0 / (12 * std::numbers::pi)), 100.0);
  EXPECT_NEAR(measured_psi_cubic_coefficient(), 1.0 / 6.0, 1e-6);
  EXPECT_LT(cn1_series_error_scaled(), 0.07);
}
