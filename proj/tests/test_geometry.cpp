#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "innlat/errors.hpp"
#include "innlat/geometry.hpp"
#include "test_util.hpp"

using namespace innlat;
using innlat::test::random_matrix;

TEST_CASE("interpolate_path") {
  LatentVector a(3), b(3);
  a << 1, 2, 3;
  b << -1, 0, 5;
  SUBCASE("coincident endpoints") {
    const auto p = interpolate_path(a, a, 0.1);
    for (const auto& pt : p.points) CHECK((pt - a).lpNorm<Eigen::Infinity>() < 1e-15);
  }
  SUBCASE("midpoint at step 0.5") {
    const auto p = interpolate_path(LatentVector::Zero(1), LatentVector::Ones(1), 0.5);
    REQUIRE(p.points.size() == 1);
    CHECK(p.points[0](0) == 0.5);
  }
  SUBCASE("step 0.1 gives nine interior points") {
    const auto p = interpolate_path(a, b, 0.1);
    REQUIRE(p.points.size() == 9);
    CHECK(p.ts.front() == doctest::Approx(0.1));
    CHECK(p.ts.back() == doctest::Approx(0.9));
    CHECK((p.points[4] - 0.5 * (a + b)).lpNorm<Eigen::Infinity>() < 1e-15);
  }
  CHECK_THROWS_AS(interpolate_path(a, b, 0.0), ParameterError);
  CHECK_THROWS_AS(interpolate_path(a, LatentVector::Zero(2), 0.1), ShapeError);
}

TEST_CASE("latent_average") {
  std::mt19937_64 rng(1);
  const LatentVector a = random_matrix(5, 1, rng), b = random_matrix(5, 1, rng);
  CHECK(latent_average(a, a) == a);
  LatentVector e1 = LatentVector::Zero(4);
  e1(0) = 1.0;
  CHECK(latent_average(LatentVector::Zero(4), 2.0 * e1) == e1);
  CHECK(latent_average(a, b) == latent_average(b, a));
}

TEST_CASE("normal quantile and cdf") {
  CHECK(normal_quantile(0.505) == doctest::Approx(0.012533469508069276).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  for (double x : {-5.0, -1.3, 0.0, 0.7, 3.2}) CHECK(normal_quantile(normal_cdf(x)) == doctest::Approx(x).epsilon(1e-10));
  CHECK_THROWS_AS(normal_quantile(1.0), ParameterError);
}

TEST_CASE("traverse_neighbour") {
  std::mt19937_64 rng(3);
  SUBCASE("zero vector stays within the 0.505 quantile") {
    for (int k = 0; k < 200; ++k) {
      const auto v = traverse_neighbour(LatentVector::Zero(32), {0.005}, rng);
      CHECK(v.lpNorm<Eigen::Infinity>() <= 0.012533469508069276 + 1e-15);
    }
  }
  SUBCASE("quantile displacement never exceeds the window") {
    LatentVector v(4);
    v << -2.5, -0.3, 0.8, 4.0;
    double worst = 0.0;
    for (int k = 0; k < 100000 / 4; ++k) {
      const auto w = traverse_neighbour(v, {0.005}, rng);
      for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(normal_cdf(w(i)) - normal_cdf(v(i))));
    }
    CHECK(worst <= 0.005 + 1e-12);
  }
  SUBCASE("vanishing window returns the input") {
    LatentVector v(3);
    v << -1.0, 0.2, 1.5;
    const auto w = traverse_neighbour(v, {1e-13}, rng);
    CHECK((w - v).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("extreme coordinates stay finite") {
    LatentVector v(2);
    v << -40.0, 40.0;
    CHECK(traverse_neighbour(v, {0.005}, rng).allFinite());
  }
  CHECK_THROWS_AS(traverse_neighbour(LatentVector::Zero(2), {0.0}, rng), ParameterError);
}

namespace {

struct AugmentFixture {
  CorpusSpec spec = CorpusSpec::default_arg0(0);
  Codebook cb{spec};
  std::vector<EmbeddedSentence> corpus = synth_generate(spec, cb);
  Encoder encode = [](const EmbeddedSentence& s) { return s.vector; };
  Decoder decode = [this](const LatentVector& v) { return cb.decode(v); };
};

}  // namespace

TEST_CASE("augment_cluster: contract on the default corpus") {
  AugmentFixture f;
  const ClusterKey target{"ARG0", "animal"};
  AugmentConfig cfg;
  cfg.seed = 11;
  const auto res = augment_cluster(f.corpus, target, f.encode, f.decode, identity_labeller, cfg);
  MESSAGE("augmentation yield " << res.sentences.size() << " in " << res.attempts << " attempts");
  CHECK(res.sentences.size() >= 90);
  CHECK(res.attempts <= 10 * cfg.budget);
  std::set<std::string> corpus_keys, keys;
  for (const auto& s : f.corpus) corpus_keys.insert(s.structure.key());
  for (const auto& s : res.sentences) {
    CHECK(s.structure.contains(target));
    CHECK(keys.insert(s.structure.key()).second);
    CHECK_FALSE(corpus_keys.count(s.structure.key()));
  }
  const auto again = augment_cluster(f.corpus, target, f.encode, f.decode, identity_labeller, cfg);
  REQUIRE(again.sentences.size() == res.sentences.size());
  for (std::size_t i = 0; i < res.sentences.size(); ++i) {
    CHECK(again.sentences[i].vector == res.sentences[i].vector);
    CHECK(again.sentences[i].id == res.sentences[i].id);
  }
}

TEST_CASE("augment_cluster: edge cases") {
  AugmentFixture f;
  AugmentConfig cfg;
  CHECK_THROWS_AS(augment_cluster(f.corpus, {"ARG0", "robot"}, f.encode, f.decode, identity_labeller, cfg), InputError);
  cfg.budget = 0;
  CHECK(augment_cluster(f.corpus, {"ARG0", "animal"}, f.encode, f.decode, identity_labeller, cfg).sentences.empty());
  // A decoder that always returns the same sentence yields it at most once.
  cfg.budget = 20;
  const auto fixed = SentenceStructure({{"ARG0", "animal"}, {"PRED", "is"}, {"ARGM-LOC", "in a cave"}});
  const auto res = augment_cluster(f.corpus, {"ARG0", "animal"}, f.encode,
                                   [&](const LatentVector&) { return fixed; }, identity_labeller, cfg);
  CHECK(res.sentences.size() <= 1);
  CHECK(res.attempts == 200);
}

TEST_CASE("pca_project") {
  SUBCASE("axis-aligned variances (4, 1)") {
    Matrix pts(2, 4);
    pts << 2, -2, 0, 0,
           0, 0, 1, -1;
    // Sample variances along the axes are 8/3 and 2/3, a 4:1 ratio.
    const auto r = pca_project(pts, 2);
    CHECK(r.explained_variance_ratio(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.explained_variance_ratio(1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.components(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.components(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("collinear points") {
    Matrix pts(3, 5);
    for (int j = 0; j < 5; ++j) pts.col(j) = Vector::LinSpaced(3, 1, 3) * (j - 2.0);
    const auto r = pca_project(pts, 2);
    CHECK(r.explained_variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("translation invariance and orthonormality") {
    std::mt19937_64 rng(9);
    const Matrix pts = random_matrix(6, 50, rng) * 2.0;
    const Matrix shifted = pts.colwise() + Vector::LinSpaced(6, -10, 10);
    const auto a = pca_project(pts, 4), b = pca_project(shifted, 4);
    CHECK((a.projections - b.projections).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK((a.components.transpose() * a.components - Matrix::Identity(4, 4)).lpNorm<Eigen::Infinity>() < 1e-12);
    for (int c = 0; c < 3; ++c) CHECK(a.explained_variance_ratio(c) >= a.explained_variance_ratio(c + 1));
  }
  CHECK_THROWS_AS(pca_project(Matrix::Zero(3, 10), 2), InputError);
  CHECK_THROWS_AS(pca_project(Matrix::Random(3, 10), 5), ParameterError);
}
