#include "doctest.h"

#include <cmath>

#include "rmtopo/errors.hpp"
#include "rmtopo/layers.hpp"
#include "rmtopo/network.hpp"
#include "fd_checks.hpp"

using namespace rmtopo;

TEST_CASE("tensor basics") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK(t.reshaped({3, 2}).shape() == std::vector<int>{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST_CASE("conv2d forward examples") {
  Tensor x({1, 1, 3, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Tensor k({1, 1, 1, 1}, std::vector<double>{2});
  Tensor y = conv2d_forward(x, k);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 2 * x[i]);

  Tensor a({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor e({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor s = conv2d_forward(a, e);
  CHECK(s.size() == 1);
  CHECK(s[0] == 5);

  CHECK(conv2d_forward(Tensor({1, 1, 14, 14}), Tensor({1, 1, 3, 3})).shape() ==
        std::vector<int>{1, 1, 12, 12});
  CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 1, 3, 3})), DimensionError);
}

TEST_CASE("conv2d backward examples") {
  Rng rng(1);
  Tensor x = fd::random_tensor({2, 2, 4, 4}, rng), k = fd::random_tensor({3, 2, 3, 3}, rng);
  auto g = conv2d_backward(x, k, Tensor({2, 3, 2, 2}));
  for (double v : g.dx.data()) CHECK(v == 0.0);
  for (double v : g.dk.data()) CHECK(v == 0.0);

  // 1x1 kernel: dk = sum over positions of x * dy
  Tensor x1 = fd::random_tensor({1, 1, 3, 3}, rng), dy = fd::random_tensor({1, 1, 3, 3}, rng);
  auto g1 = conv2d_backward(x1, Tensor({1, 1, 1, 1}, std::vector<double>{0.7}), dy);
  CHECK(g1.dk[0] == doctest::Approx(fd::dot(x1, dy)).epsilon(1e-12));
  for (std::size_t i = 0; i < x1.size(); ++i) CHECK(g1.dx[i] == doctest::Approx(0.7 * dy[i]));

  for (int i = 0; i < 5; ++i) CHECK(fd::conv2d(rng) <= 1e-4);
}

TEST_CASE("maxpool examples") {
  Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  auto p = maxpool2x2_forward(x);
  CHECK(p.y.size() == 1);
  CHECK(p.y[0] == 4);

  Tensor flat({1, 1, 2, 2}, 3.0);
  auto q = maxpool2x2_forward(flat);
  CHECK(q.argmax[0] == 0);
  Tensor dx = maxpool2x2_backward(flat.shape(), q.argmax, Tensor({1, 1, 1, 1}, 1.0));
  CHECK(dx.data() == std::vector<double>{1, 0, 0, 0});

  CHECK_THROWS_AS(maxpool2x2_forward(Tensor({1, 1, 3, 4})), DimensionError);
  CHECK(maxpool2x2_forward(Tensor({1, 1, 3, 5}), true).y.shape() == std::vector<int>{1, 1, 1, 2});

  Rng rng(2);
  for (int i = 0; i < 5; ++i) CHECK(fd::maxpool(rng) <= 1e-4);
}

TEST_CASE("fc examples") {
  Tensor x({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor id({3, 3});
  for (int i = 0; i < 3; ++i) id.at({i, i}) = 1.0;
  CHECK(fc_forward(x, id).data() == x.data());
  const Tensor z = fc_forward(x, Tensor({4, 3}));
  for (double v : z.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(fc_forward(x, Tensor({4, 2})), DimensionError);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) CHECK(fd::fc(rng) <= 1e-4);
}

TEST_CASE("activations") {
  Tensor x({1, 4}, std::vector<double>{-2, -0.5, 0.5, 2});
  CHECK(relu_forward(x).data() == std::vector<double>{0, 0, 0.5, 2});
  CHECK(tanh_forward(x)[3] == std::tanh(2.0));
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    CHECK(fd::relu(rng) <= 1e-4);
    CHECK(fd::tanh_op(rng) <= 1e-4);
  }
}

TEST_CASE("rnn step and unrolling") {
  Rng rng(5);
  Tensor x = fd::random_tensor({2, 3}, rng);
  auto h = rnn_step(x, Tensor({2, 4}), Tensor({4, 3}), Tensor({4, 4}));
  for (double v : h.data()) CHECK(v == 0.0);

  std::vector<Tensor> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(fd::random_tensor({2, 3}, rng));
  Tensor w_ih = fd::random_tensor({4, 3}, rng), w_hh = fd::random_tensor({4, 4}, rng);
  auto hs = rnn_forward(xs, Tensor({4, 3}), Tensor({4, 4}));
  for (const auto& ht : hs)
    for (double v : ht.data()) CHECK(v == 0.0);

  // first step sees h(0) = 0
  auto hs2 = rnn_forward(xs, w_ih, w_hh);
  auto h1 = rnn_step(xs[0], Tensor({2, 4}), w_ih, w_hh);
  CHECK(hs2[0].data() == h1.data());
  CHECK(hs2.size() == 4);
  for (int i = 0; i < 5; ++i) CHECK(fd::rnn(rng) <= 1e-4);
}

TEST_CASE("rnn average") {
  Rng rng(6);
  Tensor h = fd::random_tensor({2, 5}, rng);
  auto same = rnn_average({h, h, h, h});
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(same[i] == doctest::Approx(h[i]).epsilon(1e-15));

  Tensor a = fd::random_tensor({2, 5}, rng), b = fd::random_tensor({2, 5}, rng);
  Tensor na = a, nb = b;
  for (double& v : na.data()) v = -v;
  for (double& v : nb.data()) v = -v;
  const Tensor zero = rnn_average({a, na, b, nb});
  for (double v : zero.data()) CHECK(v == 0.0);

  std::vector<Tensor> hs;
  for (int t = 0; t < 4; ++t) hs.push_back(fd::random_tensor({2, 5}, rng));
  auto avg = rnn_average(hs);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    double s = 0;
    for (const auto& t : hs) s += t[i];
    CHECK(avg[i] == s / 4);
  }
}

TEST_CASE("softmax cross entropy") {
  for (int c : {2, 5, 10}) {
    auto r = softmax_xent(Tensor({1, c}, 0.3), {0});
    CHECK(r.loss == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
  }
  Rng rng(7);
  Tensor z = fd::random_tensor({3, 6}, rng, 3.0);
  auto r = softmax_xent(z, {0, 5, 2});
  for (int n = 0; n < 3; ++n) {
    double s = 0;
    for (int c = 0; c < 6; ++c) s += r.dlogits[n * 6 + c];
    CHECK(std::abs(s) <= 1e-12);
  }
  // huge logits stay finite
  auto big = softmax_xent(Tensor({1, 3}, std::vector<double>{1000, 0, -1000}), {0});
  CHECK(std::isfinite(big.loss));
  for (int i = 0; i < 5; ++i) CHECK(fd::softmax_xent(rng) <= 1e-6);
  CHECK_THROWS_AS(softmax_xent(z, {0, 1}), DimensionError);
  CHECK_THROWS_AS(softmax_xent(z, {0, 1, 6}), ArgumentError);
}

TEST_CASE("network builders") {
  auto cnn = build_cnn(1.0);
  CHECK(parameter_count(cnn) == doctest::Approx(62000).epsilon(0.02));
  CHECK(build_cnn(0.125).layers[0].dims[0] == 8);
  for (double s : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
    auto shapes = propagate_shapes(build_cnn(s));
    CHECK(shapes.back() == std::vector<int>{10});
    CHECK(output_classes(build_cnn(s)) == 10);
    auto rs = propagate_shapes(build_crnn(s));
    CHECK(rs.back() == std::vector<int>{10});
  }
  auto crnn = build_crnn(1.0);
  CHECK(parameter_count(crnn) == doctest::Approx(68500).epsilon(0.02));
  auto shapes = propagate_shapes(crnn);
  for (std::size_t i = 0; i < crnn.layers.size(); ++i)
    if (crnn.layers[i].kind == LayerKind::Recurrent) CHECK(shapes[i] == std::vector<int>{128});

  NetworkSpec bad = build_cnn(0.125);
  bad.input_shape = {1, 13, 13};
  CHECK_THROWS_AS(propagate_shapes(bad), DimensionError);

  nlohmann::json j = cnn;
  NetworkSpec back = j.get<NetworkSpec>();
  CHECK(back.layers.size() == cnn.layers.size());
  CHECK(parameter_count(back) == parameter_count(cnn));
}

TEST_CASE("network backward matches finite differences") {
  Rng rng(8);
  for (int i = 0; i < 3; ++i) {
    CHECK(fd::network(rng, false) <= 1e-4);
    CHECK(fd::network(rng, true) <= 1e-4);
  }
}
