#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "shieldscan/errors.hpp"
#include "shieldscan/model.hpp"

using namespace shieldscan;

namespace {

NuclideLibrary one_line_library() {
  return NuclideLibrary({{"src", {{0.5, 1.0}}}, {"bg", {{0.001, 1.0}}}}, 1);
}

ShieldingModel two_channel(double c) {
  Matrix s(2, 2);
  s << 0.3, 1.0, 0.7, 1.0;
  Vector e(2);
  e << 0.1, 0.2;
  Matrix cm(2, 1);
  cm << c, 0.0;
  return ShieldingModel(one_line_library(), DRFMatrix(e, s), AttenuationMatrix(cm));
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("attenuated intensity closed forms") {
    const auto model = two_channel(0.1);
    ModelParams p{Vector::Constant(1, 10.0), Vector::Ones(2), 1.0};
    CHECK(attenuated_intensity(model, p, 0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(attenuated_intensity(model, p, 1, 0) == 1.0);
    p.x = Vector::Zero(1);
    p.b << 0.15, 1.0;
    CHECK(attenuated_intensity(model, p, 0, 0) == 0.15);
    CHECK_THROWS_AS(attenuated_intensity(model, p, 2, 0), UsageError);
    CHECK_THROWS_AS(attenuated_intensity(model, p, 0, 1), UsageError);
  }

  TEST_CASE("mean spectrum closed forms") {
    // background column kept tiny so the source column dominates the check
    Matrix s(2, 2);
    s << 0.3, 1e-300, 0.7, 1e-300;
    Vector e(2);
    e << 0.1, 0.2;
    Matrix cm(2, 1);
    cm << 0.5, 0.0;
    const ShieldingModel model(one_line_library(), DRFMatrix(e, s), AttenuationMatrix(cm));
    Vector b(2);
    b << 2.0, 0.0;
    auto m = mean_spectrum(model, {Vector::Zero(1), b, 1.0});
    CHECK(m.mean[0] == doctest::Approx(0.6));
    CHECK(m.mean[1] == doctest::Approx(1.4));
    m = mean_spectrum(model, {Vector::Constant(1, 2.0), b, 3.0});
    CHECK(m.mean[0] == doctest::Approx(6.0 * std::exp(-1.0) * 0.3).epsilon(1e-14));
    CHECK(m.mean[1] == doctest::Approx(6.0 * std::exp(-1.0) * 0.7).epsilon(1e-14));
    CHECK(m.unit_mean[1] == doctest::Approx(2.0 * std::exp(-1.0) * 0.7).epsilon(1e-14));
  }

  TEST_CASE("mean spectrum matches brute-force loops") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      auto in = oracle::random_instance(rng, 5, 1, 2, 1.0);
      const auto model = in.model();
      const auto got = mean_spectrum(model, in.params());
      const auto want = oracle::mean<double>(in, std::vector<double>(in.x.data(), in.x.data() + in.x.size()),
                                             std::vector<double>(in.b.data(), in.b.data() + in.b.size()), in.tau);
      for (std::size_t i = 0; i < in.N(); ++i) {
        CHECK(got.mean[static_cast<Eigen::Index>(i)] == doctest::Approx(want[i]).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("unshielded mean is tau times grouped DRF times b") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 10; ++rep) {
      auto in = oracle::random_instance(rng, 30, 3, 2);
      const auto model = in.model();
      Matrix grouped = Matrix::Zero(30, static_cast<Eigen::Index>(in.J()));
      for (std::size_t k = 0; k < in.K(); ++k) grouped.col(static_cast<Eigen::Index>(in.owner[k])) += in.S.col(static_cast<Eigen::Index>(k));
      const Vector want = in.tau * grouped * in.b;
      const Vector got = mean_spectrum(model, {Vector::Zero(2), in.b, in.tau}).mean;
      CHECK((got - want).norm() / want.norm() < 1e-14);
    }
  }

  TEST_CASE("mean is nonincreasing in thickness, linear in tau, composes stacked shields") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
      auto in = oracle::random_instance(rng, 20, 2, 2);
      const auto model = in.model();
      const Vector mu = mean_spectrum(model, in.params()).mean;
      for (Eigen::Index m = 0; m < 2; ++m) {
        ModelParams thicker = in.params();
        thicker.x[m] += 0.1 + u(rng);
        CHECK(((mean_spectrum(model, thicker).mean - mu).array() <= 1e-12 * mu.array()).all());
      }
      ModelParams scaled = in.params();
      scaled.tau *= 7.0;
      CHECK((mean_spectrum(model, scaled).mean - 7.0 * mu).norm() <= 1e-13 * mu.norm());

      Vector extra(2);
      extra << u(rng), u(rng);
      ModelParams stacked = in.params();
      stacked.x += extra;
      for (std::size_t j = 0; j < in.J(); ++j) {
        if (j == in.background) continue;
        for (std::size_t l = 0; l < in.energies[j].size(); ++l) {
          const std::size_t k = model.library().column(j, l);
          const double factor = std::exp(-in.C.row(static_cast<Eigen::Index>(k)).dot(extra));
          CHECK(attenuated_intensity(model, stacked, j, l) ==
                doctest::Approx(attenuated_intensity(model, in.params(), j, l) * factor).epsilon(1e-13));
        }
      }
    }
  }

  TEST_CASE("construction rejects inconsistent inputs") {
    const auto lib = one_line_library();
    Vector e(2);
    e << 0.1, 0.2;
    Matrix s(2, 2);
    s << 0.3, 1.0, 0.7, 1.0;
    CHECK_THROWS_AS(ShieldingModel(lib, DRFMatrix(e, s), AttenuationMatrix(Matrix::Ones(3, 1))), UsageError);
    Matrix bg_attenuated(2, 1);
    bg_attenuated << 0.1, 0.2;
    CHECK_THROWS_AS(ShieldingModel(lib, DRFMatrix(e, s), AttenuationMatrix(bg_attenuated)), UsageError);
    Matrix dead(2, 2);
    dead << 0.3, 1.0, 0.0, 0.0;
    Matrix cm(2, 1);
    cm << 0.1, 0.0;
    CHECK_THROWS_AS(ShieldingModel(lib, DRFMatrix(e, dead), AttenuationMatrix(cm)), IdentifiabilityError);
    CHECK_THROWS_AS(DRFMatrix(Vector::Ones(2), s), UsageError);
    CHECK_THROWS_AS((ModelParams{Vector::Constant(1, -1.0), Vector::Ones(2), 1.0}.validate()), UsageError);
    CHECK_THROWS_AS((ModelParams{Vector::Zero(1), Vector::Ones(2), 0.0}.validate()), UsageError);
    CHECK_THROWS_AS(NuclideLibrary({{"a", {{0.1, 1.0}}}}, 0), UsageError);
    CHECK_THROWS_AS(NuclideLibrary({{"a", {{0.1, 1.0}}}, {"a", {{0.2, 1.0}}}}, 1), UsageError);
  }

  TEST_CASE("line threshold keeps background and strong lines") {
    const NuclideLibrary lib({{"n", {{0.1, 0.004}, {0.2, 0.5}, {0.3, 0.005}}}, {"bg", {{0.001, 0.001}}}}, 1);
    const auto cut = lib.with_line_threshold(0.005);
    CHECK(cut.line_count(0) == 2);
    CHECK(cut.line_count(1) == 1);
    CHECK(cut.n_columns() == 3);
    CHECK(cut.owner(2) == 1);
  }
}
