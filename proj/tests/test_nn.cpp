#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "bodygraph/graph.hpp"
#include "bodygraph/models.hpp"
#include "bodygraph/nn.hpp"
#include "bodygraph/rng.hpp"
#include "support/grad_check.hpp"

using namespace bodygraph;
using namespace bodygraph::nn;
using gradcheck::check_tensor;
using gradcheck::projection_loss;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

std::vector<std::array<std::int32_t, 2>> random_edges(int n, double p, Rng& rng) {
  std::vector<std::array<std::int32_t, 2>> edges;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (rng.uniform() < p) edges.push_back({a, b});
  return edges;
}

// Dense oracle for one SAGE layer: D^-1 (A + I) X W^T + 1 b^T, where D is the
// diagonal of row degrees + 1.
Matrix dense_sage_oracle(const Matrix& x, const std::vector<std::array<std::int32_t, 2>>& edges,
                         const Matrix& w, const Matrix& b) {
  const auto n = x.rows();
  Matrix a = Matrix::Identity(n, n);
  for (const auto& e : edges) {
    a(e[0], e[1]) = 1.0;
    a(e[1], e[0]) = 1.0;
  }
  const Eigen::VectorXd deg = a.rowwise().sum();
  const Matrix mean = deg.cwiseInverse().asDiagonal() * a * x;
  return (mean * w.transpose()).rowwise() + b.col(0).transpose();
}

RegressionGraph make_graph(int n, double p, Rng& rng) {
  RegressionGraph g;
  g.x = random_matrix(n, 3, rng);
  g.edges = random_edges(n, p, rng);
  g.y = {rng.uniform(0, 1), rng.uniform(0, 1)};
  g.subject_id = "g";
  return g;
}

}  // namespace

TEST_CASE("sage_forward: isolated node collapses to W x + b") {
  Rng rng(1);
  SageLayer layer(3, 2, Activation::identity, rng);
  layer.b.value.setZero();
  Matrix x = random_matrix(1, 3, rng);
  const Adjacency adj = Adjacency::build(1, {});
  const Matrix out = layer.forward(x, adj);
  const Matrix expected = x * layer.w.value.transpose();
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sage_forward: two connected nodes both see the mean") {
  Rng rng(2);
  SageLayer layer(1, 1, Activation::identity, rng);
  layer.w.value(0, 0) = 1.0;
  layer.b.value.setZero();
  Matrix x(2, 1);
  x << 1.0, 3.0;
  const Adjacency adj = Adjacency::build(2, {{0, 1}});
  const Matrix out = layer.forward(x, adj);
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(out(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("sage_forward matches the dense oracle on random graphs") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(49));
    const auto edges = random_edges(n, 0.2, rng);
    SageLayer layer(4, 5, Activation::identity, rng);
    const Matrix x = random_matrix(n, 4, rng);
    const Matrix out = layer.forward(x, Adjacency::build(n, edges));
    const Matrix oracle = dense_sage_oracle(x, edges, layer.w.value, layer.b.value);
    CHECK((out - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sage_forward is permutation equivariant") {
  Rng rng(4);
  const int n = 12;
  const auto edges = random_edges(n, 0.3, rng);
  SageLayer layer(3, 4, Activation::relu, rng);
  const Matrix x = random_matrix(n, 3, rng);
  const Matrix out = layer.forward(x, Adjacency::build(n, edges));

  // Reversal permutation.
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = n - 1 - i;
  Matrix px(n, 3);
  for (int i = 0; i < n; ++i) px.row(perm[i]) = x.row(i);
  std::vector<std::array<std::int32_t, 2>> pedges;
  for (const auto& e : edges)
    pedges.push_back({static_cast<std::int32_t>(perm[e[0]]), static_cast<std::int32_t>(perm[e[1]])});
  const Matrix pout = layer.forward(px, Adjacency::build(n, pedges));
  for (int i = 0; i < n; ++i)
    CHECK((pout.row(perm[i]) - out.row(i)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sage_backward: zero upstream, single-node dW, finite differences") {
  Rng rng(5);
  const int n = 8;
  const auto edges = random_edges(n, 0.35, rng);
  const Adjacency adj = Adjacency::build(n, edges);
  SageLayer layer(3, 4, Activation::identity, rng);
  Matrix x = random_matrix(n, 3, rng);

  // Zero upstream gradient -> zero parameter and input gradients.
  layer.forward(x, adj);
  const Matrix dz = layer.backward(Matrix::Zero(n, 4));
  CHECK(layer.w.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(layer.b.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(dz.cwiseAbs().maxCoeff() == 0.0);

  // Single isolated node, identity: dL/dW = upstream^T x.
  SageLayer single(3, 2, Activation::identity, rng);
  Matrix x1 = random_matrix(1, 3, rng);
  const Adjacency adj1 = Adjacency::build(1, {});
  single.forward(x1, adj1);
  Matrix up = random_matrix(1, 2, rng);
  single.backward(up);
  const Matrix expected = up.transpose() * x1;
  CHECK((single.w.grad - expected).cwiseAbs().maxCoeff() < 1e-14);

  // Finite differences for W, b and the input.
  const Matrix p = random_matrix(n, 4, rng);
  auto loss = [&] { return projection_loss(layer.forward(x, adj), p); };
  layer.w.zero_grad();
  layer.b.zero_grad();
  loss();
  const Matrix dx = layer.backward(p);
  CHECK(check_tensor(layer.w.value, layer.w.grad, loss) < 1e-4);
  CHECK(check_tensor(layer.b.value, layer.b.grad, loss) < 1e-4);
  Matrix dx_analytic = dx;
  CHECK(check_tensor(x, dx_analytic, loss) < 1e-4);

  SageLayer cold(3, 3, Activation::identity, rng);
  CHECK_THROWS_AS(cold.backward(Matrix::Zero(1, 3)), std::logic_error);
}

TEST_CASE("global_max_pool: examples and batched vs per-graph") {
  GlobalMaxPool pool;
  Matrix x(3, 2);
  x << 1, 5, 3, 2, 7, 0;
  const Matrix single = pool.forward(x.topRows(1), {0}, 1);
  CHECK(single(0, 0) == 1.0);
  CHECK(single(0, 1) == 5.0);

  const Matrix two = pool.forward(x.topRows(2), {0, 0}, 1);
  CHECK(two(0, 0) == 3.0);
  CHECK(two(0, 1) == 5.0);

  // Permutation of nodes within a graph leaves the output unchanged.
  Matrix xp(2, 2);
  xp << 3, 2, 1, 5;
  const Matrix two_p = pool.forward(xp, {0, 0}, 1);
  CHECK(two == two_p);

  // Batched pooling equals concatenated per-graph pools.
  Rng rng(6);
  Matrix big = random_matrix(7, 3, rng);
  const std::vector<std::int32_t> gid{0, 0, 0, 1, 1, 2, 2};
  const Matrix batched = pool.forward(big, gid, 3);
  GlobalMaxPool solo;
  CHECK((batched.row(0) - solo.forward(big.topRows(3), {0, 0, 0}, 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((batched.row(2) - solo.forward(big.bottomRows(2), {0, 0}, 1)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(pool.forward(big, gid, 4), std::invalid_argument);  // graph 3 has no nodes

  // Gradient routes to the argmax rows; finite differences confirm.
  Matrix input = random_matrix(6, 3, rng);
  const std::vector<std::int32_t> gid2{0, 0, 0, 1, 1, 1};
  const Matrix p = random_matrix(2, 3, rng);
  auto loss = [&] { return projection_loss(pool.forward(input, gid2, 2), p); };
  loss();
  Matrix dx = pool.backward(p);
  CHECK(check_tensor(input, dx, loss) < 1e-4);
}

TEST_CASE("batchnorm: train-mode columns are standardized") {
  Rng rng(7);
  BatchNorm1d bn(4);
  const Matrix x = random_matrix(32, 4, rng, 3.0);
  const Matrix out = bn.forward(x, Mode::train);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(out.col(j).mean()) < 1e-9);
    const double var = out.col(j).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("batchnorm: constant column yields zeros, not NaNs") {
  BatchNorm1d bn(2);
  Matrix x(5, 2);
  x.col(0).setConstant(3.7);
  x.col(1) << 1, 2, 3, 4, 5;
  const Matrix out = bn.forward(x, Mode::train);
  for (int i = 0; i < 5; ++i) {
    CHECK(out(i, 0) == 0.0);
    CHECK(std::isfinite(out(i, 1)));
  }
}

TEST_CASE("batchnorm: eval mode is reproducible with frozen stats") {
  Rng rng(8);
  BatchNorm1d bn(3);
  for (int step = 0; step < 5; ++step) bn.forward(random_matrix(16, 3, rng, 2.0), Mode::train);
  const Matrix probe = random_matrix(4, 3, rng);
  const Matrix a = bn.forward(probe, Mode::eval);
  const Matrix b = bn.forward(probe, Mode::eval);
  CHECK(a == b);
}

TEST_CASE("batchnorm: train-mode batch of one row is an error") {
  BatchNorm1d bn(2);
  CHECK_THROWS_AS(bn.forward(Matrix::Ones(1, 2), Mode::train), std::invalid_argument);
}

TEST_CASE("batchnorm backward passes finite differences (train and eval)") {
  Rng rng(9);
  BatchNorm1d bn(3);
  bn.gamma.value << 1.3, 0.7, -0.5;
  bn.beta.value << 0.2, -0.1, 0.4;
  Matrix x = random_matrix(10, 3, rng, 2.0);
  const Matrix p = random_matrix(10, 3, rng);

  for (const Mode mode : {Mode::train, Mode::eval}) {
    // Freeze running stats so eval-mode loss is stable under re-evaluation.
    BatchNorm1d frozen = bn;
    frozen.momentum = 0.0;
    auto loss = [&] { return projection_loss(frozen.forward(x, mode), p); };
    frozen.gamma.zero_grad();
    frozen.beta.zero_grad();
    loss();
    Matrix dx = frozen.backward(p);
    CHECK(check_tensor(frozen.gamma.value, frozen.gamma.grad, loss) < 1e-4);
    CHECK(check_tensor(frozen.beta.value, frozen.beta.grad, loss) < 1e-4);
    CHECK(check_tensor(x, dx, loss) < 1e-4);
  }
}

TEST_CASE("linear and mlp backward pass finite differences") {
  Rng rng(10);
  Mlp mlp({3, 6, 4, 2}, rng);
  Matrix x = random_matrix(5, 3, rng);
  const Matrix p = random_matrix(5, 2, rng);
  auto loss = [&] { return projection_loss(mlp.forward(x), p); };
  for (auto* par : mlp.parameters()) par->zero_grad();
  loss();
  Matrix dx = mlp.backward(p);
  for (auto* par : mlp.parameters()) CHECK(check_tensor(par->value, par->grad, loss) < 1e-4);
  CHECK(check_tensor(x, dx, loss) < 1e-4);
}

TEST_CASE("conv2d: all-ones 3x3 kernel over a constant image") {
  Rng rng(11);
  Conv2d conv(1, 1, 3, 1, 0, rng);
  conv.w.value.setOnes();
  conv.b.value.setZero();
  ImageBatch img(1, 1, 5, 5);
  img.data.setOnes();
  const ImageBatch out = conv.forward(img);
  CHECK(out.h == 3);
  CHECK(out.w == 3);
  for (std::int64_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] == doctest::Approx(9.0));
}

TEST_CASE("conv2d backward passes finite differences (stride 2, pad 1)") {
  Rng rng(12);
  Conv2d conv(2, 3, 3, 2, 1, rng);
  ImageBatch img(2, 2, 7, 6);
  for (std::int64_t i = 0; i < img.data.size(); ++i) img.data[i] = rng.normal();

  ImageBatch upstream;
  auto loss = [&] {
    const ImageBatch out = conv.forward(img);
    if (upstream.data.size() == 0) {
      upstream = ImageBatch(out.b, out.c, out.h, out.w);
      Rng prng(13);
      for (std::int64_t i = 0; i < upstream.data.size(); ++i) upstream.data[i] = prng.normal();
    }
    return (out.data.array() * upstream.data.array()).sum();
  };
  conv.w.zero_grad();
  conv.b.zero_grad();
  loss();
  const ImageBatch dimg = conv.backward(upstream);

  CHECK(check_tensor(conv.w.value, conv.w.grad, loss) < 1e-4);
  CHECK(check_tensor(conv.b.value, conv.b.grad, loss) < 1e-4);

  // Input gradient via the same central differences on the flat buffer.
  double worst = 0.0;
  for (std::int64_t i = 0; i < img.data.size(); ++i) {
    const double saved = img.data[i];
    img.data[i] = saved + 1e-5;
    const double up = loss();
    img.data[i] = saved - 1e-5;
    const double down = loss();
    img.data[i] = saved;
    worst = std::max(worst, gradcheck::rel_err(dimg.data[i], (up - down) / 2e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gnn_forward is node-permutation invariant (train and eval modes)") {
  Rng rng(14);
  RegressionGraph g = make_graph(9, 0.3, rng);
  RegressionGraph pg = g;
  const int n = static_cast<int>(g.node_count());
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i * 5 + 2) % n;  // 5 coprime with 9
  for (int i = 0; i < n; ++i) pg.x.row(perm[i]) = g.x.row(i);
  pg.edges.clear();
  for (const auto& e : g.edges)
    pg.edges.push_back({static_cast<std::int32_t>(perm[e[0]]), static_cast<std::int32_t>(perm[e[1]])});

  for (const Mode mode : {Mode::train, Mode::eval}) {
    GnnModel model(8, 2024);
    const Matrix a = model.forward(batch({g}), mode);
    const Matrix b = model.forward(batch({pg}), mode);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("full gnn gradient check on a 6-node graph, h=8") {
  Rng rng(15);
  const RegressionGraph g1 = make_graph(6, 0.4, rng);
  const RegressionGraph g2 = make_graph(5, 0.4, rng);
  const GraphBatch gb = batch({g1, g2});

  GnnModel model(8, 31337);
  const Matrix p = random_matrix(2, 2, rng);
  auto loss = [&] { return projection_loss(model.forward(gb, Mode::train), p); };
  for (auto* par : model.parameters()) par->zero_grad();
  loss();
  model.backward(p);
  double worst = 0.0;
  for (auto* par : model.parameters()) {
    Matrix grad = par->grad;  // keep a copy; re-forward accumulates nothing further
    worst = std::max(worst, check_tensor(par->value, grad, loss));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("full cnn gradient check") {
  Rng rng(16);
  CnnModel model(9, 8, {3, 4, 5}, 8, 4242);
  ImageBatch img(2, 2, 9, 8);
  for (std::int64_t i = 0; i < img.data.size(); ++i) img.data[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  const Matrix p = random_matrix(2, 2, rng);
  auto loss = [&] { return projection_loss(model.forward(img, Mode::train), p); };
  for (auto* par : model.parameters()) par->zero_grad();
  loss();
  model.backward(p);
  double worst = 0.0;
  for (auto* par : model.parameters()) {
    Matrix grad = par->grad;
    worst = std::max(worst, check_tensor(par->value, grad, loss));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("model outputs are deterministic for identical inputs and parameters") {
  Rng rng(17);
  const RegressionGraph g = make_graph(10, 0.3, rng);
  GnnModel a(16, 5);
  GnnModel b(16, 5);
  const Matrix oa = a.forward(batch({g}), Mode::eval);
  const Matrix ob = b.forward(batch({g}), Mode::eval);
  CHECK(oa == ob);
}

TEST_CASE("checkpoint round trip restores parameters bit-exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "bodygraph_ckpt";
  std::filesystem::create_directories(dir);
  Rng rng(18);

  GnnModel model(8, 777);
  // Nudge running stats away from defaults so the buffer path is exercised.
  const RegressionGraph g = make_graph(12, 0.3, rng);
  model.forward(batch({g}), Mode::train);
  nn::save_checkpoint((dir / "g").string(), model);
  GnnModel loaded = nn::load_gnn_checkpoint((dir / "g").string());
  auto pa = model.parameters();
  auto pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK(model.bn2.running_mean == loaded.bn2.running_mean);
  CHECK(model.bn2.running_var == loaded.bn2.running_var);
  const Matrix oa = model.forward(batch({g}), Mode::eval);
  const Matrix ob = loaded.forward(batch({g}), Mode::eval);
  CHECK(oa == ob);

  CnnModel cnn(9, 8, {3, 4, 5}, 8, 55);
  nn::save_checkpoint((dir / "c").string(), cnn);
  CnnModel cloaded = nn::load_cnn_checkpoint((dir / "c").string());
  auto ca = cnn.parameters();
  auto cb = cloaded.parameters();
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i]->value == cb[i]->value);

  CHECK_THROWS_AS(nn::load_gnn_checkpoint((dir / "c").string()), std::runtime_error);
}
