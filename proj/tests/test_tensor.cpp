#include <doctest.h>

#include "pcnn/linalg.hpp"

using namespace pcnn;

TEST_CASE("tensor_new basics") {
  auto z = tensor_new<double>({2, 3}, 0.0);
  CHECK(z.size() == 6);
  for (double v : z.data) CHECK(v == 0.0);

  auto one = tensor_new<double>({1}, 7.5);
  CHECK(one.size() == 1);
  CHECK(one[0] == 7.5);

  CHECK_THROWS_AS(tensor_new<double>({2, 0}, 0.0), ShapeError);
  CHECK_THROWS_AS(tensor_new<double>({-1}, 0.0), ShapeError);
}

TEST_CASE("matmul identity and hand example") {
  Tensor<double> eye({2, 2}, 0.0);
  eye.at2(0, 0) = eye.at2(1, 1) = 1.0;
  Tensor<double> a({2, 2});
  a.data = {3, -1, 2, 5};
  auto r = matmul(eye, a);
  CHECK(r.data == a.data);

  Tensor<double> m({2, 2});
  m.data = {1, 2, 3, 4};
  Tensor<double> v({2, 1});
  v.data = {0, 1};
  auto mv = matmul(m, v);
  CHECK(mv.shape == std::vector<int64_t>({2, 1}));
  CHECK(mv[0] == 2.0);
  CHECK(mv[1] == 4.0);

  Tensor<double> bad({4, 2});
  CHECK_THROWS_AS(matmul(Tensor<double>({2, 3}), bad), ShapeError);
}

TEST_CASE("matmul agrees exactly with a scalar triple loop (64-bit)") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t m = 1 + static_cast<int64_t>(rng.below(8));
    const int64_t k = 1 + static_cast<int64_t>(rng.below(8));
    const int64_t n = 1 + static_cast<int64_t>(rng.below(8));
    Tensor<double> a({m, k}), b({k, n});
    for (auto& v : a.data) v = rng.uniform(-2, 2);
    for (auto& v : b.data) v = rng.uniform(-2, 2);
    auto c = matmul(a, b);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double s = 0;
        for (int64_t kk = 0; kk < k; ++kk) s += a.at2(i, kk) * b.at2(kk, j);
        REQUIRE(c.at2(i, j) == s);
      }
  }
}

TEST_CASE("im2col single pixel puts the value at the center row") {
  Tensor<double> x({1, 1, 1, 1}, 3.25);
  auto cols = im2col(x);
  CHECK(cols.shape == std::vector<int64_t>({9, 1}));
  for (int64_t r = 0; r < 9; ++r) CHECK(cols[r] == (r == 4 ? 3.25 : 0.0));
}

TEST_CASE("im2col shape contract") {
  Tensor<double> x({1, 1, 4, 4}, 1.0);
  CHECK(im2col(x).shape == std::vector<int64_t>({9, 16}));
}

TEST_CASE("im2col matches a direct-indexing oracle") {
  Rng rng(7);
  Tensor<double> x({2, 3, 5, 5});
  for (auto& v : x.data) v = rng.uniform(-1, 1);
  auto cols = im2col(x);
  const int64_t n = 2, c = 3, h = 5, w = 5;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ku = 0; ku < 3; ++ku)
      for (int64_t kv = 0; kv < 3; ++kv)
        for (int64_t ni = 0; ni < n; ++ni)
          for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
              const int64_t si = i + ku - 1, sj = j + kv - 1;
              const double expect =
                  (si < 0 || si >= h || sj < 0 || sj >= w) ? 0.0 : x.at4(ni, ci, si, sj);
              const int64_t row = ci * 9 + ku * 3 + kv;
              const int64_t col = (ni * h + i) * w + j;
              REQUIRE(cols.at2(row, col) == expect);
            }
}

TEST_CASE("col2im zero input and interior accumulation") {
  Tensor<double> zero_cols({18, 16}, 0.0);
  auto z = col2im(zero_cols, {1, 2, 4, 4});
  for (double v : z.data) CHECK(v == 0.0);

  // col2im(im2col(x)) multiplies interior pixels by 9
  Tensor<double> x({1, 1, 5, 5});
  Rng rng(3);
  for (auto& v : x.data) v = rng.uniform(0.5, 1.5);
  auto back = col2im(im2col(x), {1, 1, 5, 5});
  for (int64_t i = 2; i < 3; ++i)
    for (int64_t j = 2; j < 3; ++j)
      CHECK(back.at4(0, 0, i, j) == doctest::Approx(9 * x.at4(0, 0, i, j)).epsilon(1e-12));

  CHECK_THROWS_AS(col2im(zero_cols, {1, 3, 4, 4}), ShapeError);
}

TEST_CASE("im2col/col2im adjoint identity") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng.below(2));
    const int64_t c = 1 + static_cast<int64_t>(rng.below(3));
    const int64_t h = 1 + static_cast<int64_t>(rng.below(5));
    const int64_t w = 1 + static_cast<int64_t>(rng.below(5));
    Tensor<double> x({n, c, h, w}), y({c * 9, n * h * w});
    for (auto& v : x.data) v = rng.uniform(-1, 1);
    for (auto& v : y.data) v = rng.uniform(-1, 1);
    double lhs = 0, rhs = 0;
    auto cx = im2col(x);
    auto cy = col2im(y, {n, c, h, w});
    for (int64_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
    for (int64_t i = 0; i < x.size(); ++i) rhs += x[i] * cy[i];
    REQUIRE(std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0}) < 1e-12);
  }
}

TEST_CASE("shape algebra fuzz: output shapes are pure functions of input shapes") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t m = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t k = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t n = 1 + static_cast<int64_t>(rng.below(6));
    auto c = matmul(Tensor<float>({m, k}, 1.f), Tensor<float>({k, n}, 1.f));
    REQUIRE(c.shape == std::vector<int64_t>({m, n}));
    REQUIRE(static_cast<int64_t>(c.data.size()) == m * n);

    const int64_t b = 1 + static_cast<int64_t>(rng.below(2));
    const int64_t ch = 1 + static_cast<int64_t>(rng.below(3));
    const int64_t h = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t w = 1 + static_cast<int64_t>(rng.below(6));
    auto cols = im2col(Tensor<float>({b, ch, h, w}, 0.f));
    REQUIRE(cols.shape == std::vector<int64_t>({ch * 9, b * h * w}));
    REQUIRE(static_cast<int64_t>(cols.data.size()) == ch * 9 * b * h * w);
  }
}

TEST_CASE("rng reproducibility and substream purity") {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng s1 = Rng::substream(5, 10, 3);
  Rng s2 = Rng::substream(5, 10, 3);
  Rng s3 = Rng::substream(5, 10, 4);
  bool same = true, differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t v1 = s1.next_u64();
    same = same && v1 == s2.next_u64();
    differs = differs || v1 != s3.next_u64();
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("rng uniform range and bernoulli sanity") {
  Rng rng(9);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    if (rng.bernoulli(0.3)) ++hits;
  }
  CHECK(hits > 28000);
  CHECK(hits < 32000);
}
