#include "bodygraph/models.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace bodygraph::nn {

GnnModel::GnnModel(int hidden_, std::uint64_t seed_) : hidden(hidden_), seed(seed_) {
  if (hidden < 2) throw std::invalid_argument("GnnModel: hidden width must be >= 2");
  Rng rng(seed);
  sage1 = SageLayer(3, hidden, Activation::identity, rng);
  sage2 = SageLayer(hidden, hidden, Activation::identity, rng);
  sage3 = SageLayer(hidden, hidden, Activation::identity, rng);
  bn1 = BatchNorm1d(hidden);
  bn2 = BatchNorm1d(hidden);
  bn3 = BatchNorm1d(hidden);
  head = Mlp({hidden, hidden, hidden / 2, 2}, rng);
}

Matrix GnnModel::forward(const GraphBatch& batch, Mode mode) {
  adj_ = Adjacency::build(batch.x.rows(), batch.edges);
  Matrix h = relu1.forward(bn1.forward(sage1.forward(batch.x, adj_), mode));
  h = relu2.forward(bn2.forward(sage2.forward(h, adj_), mode));
  h = relu3.forward(bn3.forward(sage3.forward(h, adj_), mode));
  const Matrix pooled = pool.forward(h, batch.graph_id, batch.graph_count());
  return head.forward(pooled);
}

void GnnModel::backward(const Matrix& grad_out) {
  Matrix d = head.backward(grad_out);
  d = pool.backward(d);
  d = sage3.backward(bn3.backward(relu3.backward(d)));
  d = sage2.backward(bn2.backward(relu2.backward(d)));
  d = sage1.backward(bn1.backward(relu1.backward(d)));
}

std::vector<Parameter*> GnnModel::parameters() {
  std::vector<Parameter*> out;
  for (auto* p : sage1.parameters()) out.push_back(p);
  for (auto* p : bn1.parameters()) out.push_back(p);
  for (auto* p : sage2.parameters()) out.push_back(p);
  for (auto* p : bn2.parameters()) out.push_back(p);
  for (auto* p : sage3.parameters()) out.push_back(p);
  for (auto* p : bn3.parameters()) out.push_back(p);
  for (auto* p : head.parameters()) out.push_back(p);
  return out;
}

CnnModel::CnnModel(std::int64_t in_h_, std::int64_t in_w_, std::array<int, 3> channels_,
                   int hidden_, std::uint64_t seed_)
    : in_h(in_h_), in_w(in_w_), channels(channels_), hidden(hidden_), seed(seed_) {
  Rng rng(seed);
  conv1 = Conv2d(2, channels[0], 3, 2, 1, rng);
  conv2 = Conv2d(channels[0], channels[1], 3, 2, 1, rng);
  conv3 = Conv2d(channels[1], channels[2], 3, 2, 1, rng);
  head = Mlp({flat_dim(), hidden, hidden / 2, 2}, rng);
}

std::int64_t CnnModel::flat_dim() const {
  std::int64_t h = in_h, w = in_w;
  for (int i = 0; i < 3; ++i) {
    h = Conv2d::out_extent(h, 3, 2, 1);
    w = Conv2d::out_extent(w, 3, 2, 1);
  }
  if (h < 1 || w < 1) throw std::invalid_argument("CnnModel: input too small for three strides");
  return channels[2] * h * w;
}

Matrix CnnModel::forward(const ImageBatch& images, Mode mode) {
  (void)mode;  // no normalization layers in the CNN
  if (images.h != in_h || images.w != in_w)
    throw std::invalid_argument("CnnModel: image resolution differs from the declared one");
  ImageBatch h = relu1.forward(conv1.forward(images));
  h = relu2.forward(conv2.forward(h));
  h = relu3.forward(conv3.forward(h));
  last_b_ = h.b;
  last_c_ = h.c;
  last_h_ = h.h;
  last_w_ = h.w;
  Matrix flat(h.b, h.c * h.h * h.w);
  for (std::int64_t bi = 0; bi < h.b; ++bi)
    for (std::int64_t i = 0; i < flat.cols(); ++i) flat(bi, i) = h.data[bi * flat.cols() + i];
  return head.forward(flat);
}

void CnnModel::backward(const Matrix& grad_out) {
  const Matrix dflat = head.backward(grad_out);
  ImageBatch d(last_b_, last_c_, last_h_, last_w_);
  for (std::int64_t bi = 0; bi < last_b_; ++bi)
    for (std::int64_t i = 0; i < dflat.cols(); ++i) d.data[bi * dflat.cols() + i] = dflat(bi, i);
  conv1.backward(relu1.backward(conv2.backward(relu2.backward(conv3.backward(relu3.backward(d))))));
}

std::vector<Parameter*> CnnModel::parameters() {
  std::vector<Parameter*> out;
  for (auto* p : conv1.parameters()) out.push_back(p);
  for (auto* p : conv2.parameters()) out.push_back(p);
  for (auto* p : conv3.parameters()) out.push_back(p);
  for (auto* p : head.parameters()) out.push_back(p);
  return out;
}

namespace {

void write_le_doubles(std::ofstream& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    out.write(bytes, 8);
  }
}

void read_le_doubles(std::ifstream& in, double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::runtime_error("checkpoint payload truncated");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    data[i] = std::bit_cast<double>(bits);
  }
}

template <typename Model>
void save_impl(const std::string& base, Model& m, nlohmann::json meta,
               const std::vector<Vector*>& buffers) {
  auto params = m.parameters();
  nlohmann::json shapes = nlohmann::json::array();
  for (auto* p : params) shapes.push_back({p->value.rows(), p->value.cols()});
  meta["params"] = shapes;
  nlohmann::json buf_shapes = nlohmann::json::array();
  for (auto* b : buffers) buf_shapes.push_back(b->size());
  meta["buffers"] = buf_shapes;

  std::ofstream hdr(base + ".nnhdr", std::ios::binary);
  if (!hdr) throw std::runtime_error("cannot write: " + base + ".nnhdr");
  hdr << meta.dump(2) << "\n";

  std::ofstream bin(base + ".nnbin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write: " + base + ".nnbin");
  for (auto* p : params) write_le_doubles(bin, p->value.data(), static_cast<std::size_t>(p->value.size()));
  for (auto* b : buffers) write_le_doubles(bin, b->data(), static_cast<std::size_t>(b->size()));
}

template <typename Model>
void load_impl(const std::string& base, Model& m, const std::vector<Vector*>& buffers) {
  std::ifstream bin(base + ".nnbin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read: " + base + ".nnbin");
  for (auto* p : m.parameters())
    read_le_doubles(bin, p->value.data(), static_cast<std::size_t>(p->value.size()));
  for (auto* b : buffers) read_le_doubles(bin, b->data(), static_cast<std::size_t>(b->size()));
}

nlohmann::json read_header(const std::string& base) {
  std::ifstream hdr(base + ".nnhdr", std::ios::binary);
  if (!hdr) throw std::runtime_error("cannot read: " + base + ".nnhdr");
  return nlohmann::json::parse(hdr);
}

}  // namespace

void save_checkpoint(const std::string& base_path, GnnModel& m) {
  nlohmann::json meta;
  meta["kind"] = "gnn";
  meta["hidden"] = m.hidden;
  meta["seed"] = m.seed;
  save_impl(base_path, m, meta,
            {&m.bn1.running_mean, &m.bn1.running_var, &m.bn2.running_mean, &m.bn2.running_var,
             &m.bn3.running_mean, &m.bn3.running_var});
}

void save_checkpoint(const std::string& base_path, CnnModel& m) {
  nlohmann::json meta;
  meta["kind"] = "cnn";
  meta["hidden"] = m.hidden;
  meta["seed"] = m.seed;
  meta["in_h"] = m.in_h;
  meta["in_w"] = m.in_w;
  meta["channels"] = m.channels;
  save_impl(base_path, m, meta, {});
}

GnnModel load_gnn_checkpoint(const std::string& base_path) {
  const auto meta = read_header(base_path);
  if (meta.at("kind").get<std::string>() != "gnn")
    throw std::runtime_error("checkpoint is not a gnn model: " + base_path);
  GnnModel m(meta.at("hidden").get<int>(), meta.at("seed").get<std::uint64_t>());
  load_impl(base_path, m,
            {&m.bn1.running_mean, &m.bn1.running_var, &m.bn2.running_mean, &m.bn2.running_var,
             &m.bn3.running_mean, &m.bn3.running_var});
  return m;
}

CnnModel load_cnn_checkpoint(const std::string& base_path) {
  const auto meta = read_header(base_path);
  if (meta.at("kind").get<std::string>() != "cnn")
    throw std::runtime_error("checkpoint is not a cnn model: " + base_path);
  CnnModel m(meta.at("in_h").get<std::int64_t>(), meta.at("in_w").get<std::int64_t>(),
             meta.at("channels").get<std::array<int, 3>>(), meta.at("hidden").get<int>(),
             meta.at("seed").get<std::uint64_t>());
  load_impl(base_path, m, {});
  return m;
}

}  // namespace bodygraph::nn
