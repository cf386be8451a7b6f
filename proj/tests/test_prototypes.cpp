#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/prototypes.hpp"

using namespace protoicl;
using protoicl::testing::cyclic_labels;
using protoicl::testing::random_batch;
using protoicl::testing::random_net;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

RowVector row(std::initializer_list<double> v) { return vec(v).transpose(); }

PrototypeStore two_axes() {
  PrototypeStore s(2);
  s.add(0, vec({1, 0}), 1);
  s.add(1, vec({0, 1}), 1);
  return s;
}

}  // namespace

TEST_CASE("store bookkeeping") {
  PrototypeStore s(2);
  CHECK(s.empty());
  s.add(4, vec({1, 2}), 3);
  CHECK(s.contains(4));
  CHECK(s.at(4).count == 3);
  CHECK_THROWS_AS(s.add(4, vec({1, 0}), 1), DataError);
  CHECK_THROWS_AS(s.add(5, vec({0, 0}), 1), DataError);
  CHECK_THROWS_AS(s.add(5, vec({1, 0}), 0), DataError);
  CHECK_THROWS_AS(s.add(5, vec({1, 0, 0}), 1), InputError);
}

TEST_CASE("predict") {
  const auto s = two_axes();
  CHECK(predict(s, row({0.9, 0.1})).label == 0);
  CHECK(predict(s, row({0, 1})).label == 1);
  CHECK(predict(s, row({0.1, 0.9}) * 1e6).label == 1);
  CHECK(predict(s, row({0.5, 0.5})).label == 0);  // tie
  const auto z = predict(s, row({0, 0}));
  CHECK(z.label == 0);
  CHECK(z.degenerate);
  CHECK_THROWS_AS((void)predict(PrototypeStore(2), row({1, 0})), UsageError);
}

TEST_CASE("prediction ignores scale and insertion order") {
  const Matrix means = random_batch(1, 6, 4);
  const Matrix queries = random_batch(2, 200, 4);
  PrototypeStore forward(4), backward(4), scaled(4);
  for (int c = 0; c < 6; ++c) forward.add(c * 3, means.row(c).transpose(), 1);
  for (int c = 5; c >= 0; --c) backward.add(c * 3, means.row(c).transpose(), 1);
  for (int c = 0; c < 6; ++c) scaled.add(c * 3, 2.5 * means.row(c).transpose(), 1);
  const auto ref = predict_batch(forward, queries);
  CHECK(predict_batch(backward, queries) == ref);
  CHECK(predict_batch(scaled, queries) == ref);
  CHECK(predict_batch(forward, 7.0 * queries) == ref);
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    CHECK(ref[static_cast<std::size_t>(i)] == predict(forward, queries.row(i)).label);
}

TEST_CASE("class means") {
  SUBCASE("hand example through an identity-like net") {
    Network net({{2, 2}}, {{2, 2}});
    net.params().setZero();
    net.weights(0).setIdentity();
    Matrix x(2, 2);
    x << 1, 0, 0, 1;
    // ELU keeps nonnegative inputs as-is
    const std::vector<ClassId> labels{7, 7};
    const auto m = class_means(net, x, labels);
    CHECK(m.at(7).mean.isApprox(vec({0.5, 0.5})));
    CHECK(m.at(7).count == 2);
  }
  SUBCASE("streaming equals one-shot") {
    const Network net = random_net(3, 6, 5, 4);
    const Matrix x = random_batch(4, 103, 6);
    const auto labels = cyclic_labels(103, 4);
    const auto streamed = class_means(net, x, labels, 7);
    const Matrix codes = forward_encode(net, x);
    for (int c = 0; c < 4; ++c) {
      Vector sum = Vector::Zero(4);
      int n = 0;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == c) {
          sum += codes.row(static_cast<Eigen::Index>(i)).transpose();
          ++n;
        }
      CHECK((streamed.at(c).mean - sum / n).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("append only and required classes") {
    const Network net = random_net(5, 6, 5, 4);
    const Matrix x = random_batch(6, 10, 6);
    PrototypeStore store(4);
    compute_class_means(net, x, cyclic_labels(10, 2), store);
    CHECK(store.size() == 2);
    CHECK_THROWS_AS(compute_class_means(net, x, cyclic_labels(10, 2), store), DataError);
    PrototypeStore other(4);
    const std::vector<ClassId> required{0, 1, 2};
    CHECK_THROWS_AS(compute_class_means(net, x, cyclic_labels(10, 2), other, required), DataError);
  }
}

TEST_CASE("replace_means") {
  auto s = two_axes();
  s.replace_means({{0, vec({1, 0})}});
  CHECK(s.at(0).mean == vec({1, 0}));
  s.replace_means({{1, vec({1, 1})}});
  CHECK(s.at(1).mean == vec({1, 1}));
  CHECK(s.at(0).mean == vec({1, 0}));
  CHECK(predict(s, row({0.6, 0.4})).label == 1);
  CHECK_THROWS_AS(s.replace_means({{0, vec({1, 0, 0})}}), InputError);
  CHECK_THROWS(s.replace_means({{9, vec({1, 0})}}));
}
