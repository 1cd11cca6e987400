#include <doctest.h>

#include <cmath>

#include "ctrlgen/embeddings.hpp"

using namespace ctrlgen;

TEST_CASE("sinusoidal embedding matches its closed form") {
  for (int d : {2, 8, 64}) {
    for (int c : {0, 1, 3, 17, 250, 999}) {
      Tensor<double> e = embed_sinusoidal<double>(c, d);
      REQUIRE(e.cols() == d);
      for (int i = 0; 2 * i < d; ++i) {
        const double denom = std::pow(10000.0, (2.0 * i) / d);
        CHECK(std::abs(e.value()(0, 2 * i) - std::sin(c / denom)) < 1e-12);
        CHECK(std::abs(e.value()(0, 2 * i + 1) - std::cos(c / denom)) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(embed_sinusoidal<double>(3, 7), DataError);
  CHECK_THROWS_AS(embed_sinusoidal<double>(3, 0), DataError);
}

TEST_CASE("scalar_repeat at width one degenerates to scalar") {
  for (int c : {-3, 0, 4, 18}) {
    CHECK(embed_scalar_repeat<double>(c, 1).value() == embed_scalar<double>(c).value());
    CHECK(embed_scalar_repeat<double>(c, 1, 0.1).value() == embed_scalar<double>(c, 0.1).value());
  }
  Tensor<double> wide = embed_scalar_repeat<double>(6, 5, 0.5);
  CHECK(wide.cols() == 5);
  for (int j = 0; j < 5; ++j) CHECK(wide.value()(0, j) == 3.0);
}

TEST_CASE("learnable table covers its range and nothing else") {
  Rng rng(3);
  LearnableTable<double> table = LearnableTable<double>::init({3, 12}, 4, rng);
  CHECK(table.rows.rows() == 10);
  CHECK(table.rows.requires_grad());
  CHECK(table.range().contains(3));
  CHECK(table.range().contains(12));
  CHECK(embed_learnable(7, table).value() == table.rows.value().row(7 - 3));
  CHECK_THROWS_AS(embed_learnable(13, table), DataError);
  CHECK_THROWS_AS(embed_learnable(2, table), DataError);
  CHECK(table.rows.value().cwiseAbs().maxCoeff() <= 0.1);
}

TEST_CASE("embedder widths follow the strategy") {
  Rng rng(4);
  EmbeddingStrategy s;
  s.value_range = {0, 10};
  s.dim = 6;

  s.kind = EmbeddingKind::scalar;
  CHECK(ControlEmbedder<double>(s, rng).width() == 1);
  s.kind = EmbeddingKind::scalar_repeat;
  CHECK(ControlEmbedder<double>(s, rng).width() == 6);
  s.kind = EmbeddingKind::sinusoidal;
  CHECK(ControlEmbedder<double>(s, rng).width() == 6);
  s.kind = EmbeddingKind::learnable;
  ControlEmbedder<double> learn(s, rng);
  CHECK(learn.width() == 6);
  CHECK(learn.embed(10).cols() == 6);
  CHECK_THROWS_AS(learn.embed(11), DataError);

  s.kind = EmbeddingKind::sinusoidal;
  s.dim = 5;
  CHECK_THROWS_AS(ControlEmbedder<double>(s, rng), ConfigError);
}

TEST_CASE("scalar scale rescales the raw value") {
  CHECK(embed_scalar<double>(18).item() == 18.0);
  CHECK(embed_scalar<double>(18, 0.1).item() == doctest::Approx(1.8));
}
