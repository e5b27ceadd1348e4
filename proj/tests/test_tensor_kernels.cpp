#include <doctest.h>

#include <cstring>

#include "fedvg/kernels.hpp"
#include "fedvg/tensor.hpp"
#include "testutil.hpp"

using namespace fedvg;

TEST_CASE("tensor shape/data invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), InputError);
  CHECK_THROWS_AS(Tensor({0, 3}), InputError);
  const Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
}

namespace {

std::vector<double> rand_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial and omp kernels agree bitwise") {
  const int64_t n = 17, in = 13, out = 9;
  const auto x = rand_vec(static_cast<size_t>(n * in), 1);
  const auto w = rand_vec(static_cast<size_t>(out * in), 2);
  const auto b = rand_vec(static_cast<size_t>(out), 3);
  const auto dy = rand_vec(static_cast<size_t>(n * out), 4);

  std::vector<double> ys(static_cast<size_t>(n * out)), yp(ys);
  kernels::serial::dense_forward(x.data(), w.data(), b.data(), ys.data(), n, in, out);
  kernels::omp::dense_forward(x.data(), w.data(), b.data(), yp.data(), n, in, out);
  CHECK(same_bits(ys, yp));

  std::vector<double> dws(static_cast<size_t>(out * in)), dwp(dws);
  kernels::serial::dense_backward_w(x.data(), dy.data(), dws.data(), n, in, out);
  kernels::omp::dense_backward_w(x.data(), dy.data(), dwp.data(), n, in, out);
  CHECK(same_bits(dws, dwp));

  std::vector<double> dbs(static_cast<size_t>(out)), dbp(dbs);
  kernels::serial::dense_backward_b(dy.data(), dbs.data(), n, out);
  kernels::omp::dense_backward_b(dy.data(), dbp.data(), n, out);
  CHECK(same_bits(dbs, dbp));

  std::vector<double> dxs(static_cast<size_t>(n * in)), dxp(dxs);
  kernels::serial::dense_backward_x(dy.data(), w.data(), dxs.data(), n, in, out);
  kernels::omp::dense_backward_x(dy.data(), w.data(), dxp.data(), n, in, out);
  CHECK(same_bits(dxs, dxp));
}

TEST_CASE("serial and omp conv/pool kernels agree bitwise") {
  const int64_t n = 3, h = 11, w = 9, ic = 2, oc = 4;
  const int64_t oh = h - 2, ow = w - 2;
  const auto x = rand_vec(static_cast<size_t>(n * h * w * ic), 5);
  const auto k = rand_vec(static_cast<size_t>(oc * ic * 9), 6);
  const auto b = rand_vec(static_cast<size_t>(oc), 7);
  const auto dy = rand_vec(static_cast<size_t>(n * oh * ow * oc), 8);

  std::vector<double> ys(static_cast<size_t>(n * oh * ow * oc)), yp(ys);
  kernels::serial::conv2d_forward(x.data(), k.data(), b.data(), ys.data(), n, h, w, ic, oc, 3, 3);
  kernels::omp::conv2d_forward(x.data(), k.data(), b.data(), yp.data(), n, h, w, ic, oc, 3, 3);
  CHECK(same_bits(ys, yp));

  std::vector<double> dxs(static_cast<size_t>(n * h * w * ic)), dxp(dxs);
  kernels::serial::conv2d_backward_x(dy.data(), k.data(), dxs.data(), n, h, w, ic, oc, 3, 3);
  kernels::omp::conv2d_backward_x(dy.data(), k.data(), dxp.data(), n, h, w, ic, oc, 3, 3);
  CHECK(same_bits(dxs, dxp));

  std::vector<double> dws(static_cast<size_t>(oc * ic * 9)), dwp(dws);
  kernels::serial::conv2d_backward_w(x.data(), dy.data(), dws.data(), n, h, w, ic, oc, 3, 3);
  kernels::omp::conv2d_backward_w(x.data(), dy.data(), dwp.data(), n, h, w, ic, oc, 3, 3);
  CHECK(same_bits(dws, dwp));

  std::vector<double> ps(static_cast<size_t>(n * (h / 2) * (w / 2) * ic)), pp(ps);
  std::vector<int64_t> as(ps.size()), ap(ps.size());
  kernels::serial::maxpool2_forward(x.data(), ps.data(), as.data(), n, h, w, ic);
  kernels::omp::maxpool2_forward(x.data(), pp.data(), ap.data(), n, h, w, ic);
  CHECK(same_bits(ps, pp));
  CHECK(as == ap);

  const auto dpool = rand_vec(ps.size(), 9);
  std::vector<double> gs(static_cast<size_t>(n * h * w * ic), 0.0), gp(gs);
  kernels::serial::maxpool2_backward(dpool.data(), as.data(), gs.data(), n, h / 2, w / 2, ic);
  kernels::omp::maxpool2_backward(dpool.data(), ap.data(), gp.data(), n, h / 2, w / 2, ic);
  CHECK(same_bits(gs, gp));
}

TEST_CASE("dispatch flag routes to identical results") {
  const int64_t n = 5, in = 4, out = 3;
  const auto x = rand_vec(static_cast<size_t>(n * in), 10);
  const auto w = rand_vec(static_cast<size_t>(out * in), 11);
  std::vector<double> a(static_cast<size_t>(n * out)), b2(a);
  const bool prev = kernels::parallel_enabled();
  kernels::set_parallel(false);
  kernels::dense_forward(x.data(), w.data(), nullptr, a.data(), n, in, out);
  kernels::set_parallel(true);
  kernels::dense_forward(x.data(), w.data(), nullptr, b2.data(), n, in, out);
  kernels::set_parallel(prev);
  CHECK(same_bits(a, b2));
}
