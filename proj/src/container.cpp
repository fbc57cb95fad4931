#include "wavelatent/container.hpp"

#include <string>

#include "wavelatent/error.hpp"

namespace wavelatent {

namespace container {

namespace {

constexpr std::string_view kMagic = "WLMD";

void write_sequential(io::ByteWriter& w, const ad::Sequential& net) {
  w.u64(net.input_shape().channels);
  w.u64(net.input_shape().length);
  const auto specs = net.specs();
  w.u32(static_cast<std::uint32_t>(specs.size()));
  for (const auto& s : specs) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    for (std::size_t v : {s.units, s.out_channels, s.channels, s.kernel, s.stride, s.padding, s.factor}) w.u64(v);
    w.u8(static_cast<std::uint8_t>(s.activation));
  }
  const auto blocks = net.params();
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (auto b : blocks) w.f64s(b);
}

ad::Sequential read_sequential(io::ByteReader& r) {
  const std::size_t at = r.offset();
  ad::Shape shape;
  shape.channels = r.u64();
  shape.length = r.u64();
  const std::uint32_t count = r.u32();
  if (count > r.remaining()) r.fail("layer count exceeds payload");
  std::vector<ad::LayerSpec> specs;
  for (std::uint32_t i = 0; i < count; ++i) {
    ad::LayerSpec s;
    const std::size_t kind_at = r.offset();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(ad::LayerKind::activation)) throw FormatError("unknown layer kind", kind_at);
    s.kind = static_cast<ad::LayerKind>(kind);
    s.units = r.u64();
    s.out_channels = r.u64();
    s.channels = r.u64();
    s.kernel = r.u64();
    s.stride = r.u64();
    s.padding = r.u64();
    s.factor = r.u64();
    const std::size_t act_at = r.offset();
    const std::uint8_t act = r.u8();
    if (act > static_cast<std::uint8_t>(ad::Activation::sigmoid)) throw FormatError("unknown activation", act_at);
    s.activation = static_cast<ad::Activation>(act);
    specs.push_back(s);
  }
  ad::Sequential net;
  try {
    Rng unused(0);
    net = ad::Sequential(specs, shape, unused);
  } catch (const Error& e) {
    throw FormatError(std::string("invalid layer stack: ") + e.what(), at);
  }
  const std::size_t blocks_at = r.offset();
  const std::uint32_t blocks = r.u32();
  auto params = net.params();
  if (blocks != params.size()) throw FormatError("parameter block count does not match layers", blocks_at);
  for (auto p : params) {
    const std::size_t block_at = r.offset();
    const auto values = r.f64s();
    if (values.size() != p.size()) throw FormatError("parameter block size does not match layer", block_at);
    std::copy(values.begin(), values.end(), p.begin());
  }
  return net;
}

void write_columns(io::ByteWriter& w, const std::vector<ColumnScale>& cols) {
  w.u32(static_cast<std::uint32_t>(cols.size()));
  for (const auto& c : cols) {
    w.f64(c.offset);
    w.f64(c.scale);
  }
}

std::vector<ColumnScale> read_columns(io::ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 16) r.fail("column count exceeds payload");
  std::vector<ColumnScale> out(n);
  for (auto& c : out) {
    c.offset = r.f64();
    c.scale = r.f64();
  }
  return out;
}

void write_vector(io::ByteWriter& w, const Eigen::VectorXd& v) { w.f64s({v.data(), static_cast<std::size_t>(v.size())}); }

Eigen::VectorXd read_vector(io::ByteReader& r) {
  const auto values = r.f64s();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void write_header(io::ByteWriter& w, ModelKind kind) {
  w.bytes(kMagic);
  w.u16(kModelVersion);
  w.u8(static_cast<std::uint8_t>(kind));
}

ModelKind read_header(io::ByteReader& r) {
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) throw FormatError("not a WLMD container", 0);
  const std::size_t version_at = r.offset();
  if (r.u16() != kModelVersion) throw FormatError("unsupported WLMD version", version_at);
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 4) throw FormatError("unknown model kind", kind_at);
  return static_cast<ModelKind>(kind);
}

void expect_kind(io::ByteReader& r, ModelKind kind) {
  const ModelKind got = read_header(r);
  if (got != kind)
    throw FormatError("container holds model kind " + std::to_string(static_cast<int>(got)) + ", expected " +
                          std::to_string(static_cast<int>(kind)),
                      r.offset() - 1);
}

void write_matrix(io::ByteWriter& w, const RowMatrix& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

RowMatrix read_matrix(io::ByteReader& r) {
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  if (cols != 0 && rows > r.remaining() / 8 / cols) r.fail("matrix size exceeds payload");
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

void write_network(io::ByteWriter& w, const NetworkModel& model) {
  if (!model.trained()) throw ConfigError("refusing to persist an untrained network (empty training log)");
  w.u8(static_cast<std::uint8_t>(model.family));
  w.u64(model.seed);
  w.u64(model.input_dim);
  w.u64(model.latent_dim);
  write_sequential(w, model.encoder);
  write_sequential(w, model.decoder);
  write_columns(w, model.input_scale);
  write_columns(w, model.output_scale);
  w.u64(model.log.size());
  for (const auto& e : model.log)
    for (double v : {e.loss, e.recon, e.kl, e.rss}) w.f64(v);
  w.f64(model.final_rss);
}

NetworkModel read_network(io::ByteReader& r) {
  NetworkModel model;
  const std::size_t family_at = r.offset();
  const std::uint8_t family = r.u8();
  if (family < 1 || family > 3) throw FormatError("unknown network family", family_at);
  model.family = static_cast<NetworkFamily>(family);
  model.seed = r.u64();
  model.input_dim = r.u64();
  model.latent_dim = r.u64();
  model.encoder = read_sequential(r);
  model.decoder = read_sequential(r);
  model.input_scale = read_columns(r);
  model.output_scale = read_columns(r);
  const std::uint64_t epochs = r.u64();
  if (epochs > r.remaining() / 32) r.fail("log length exceeds payload");
  for (std::uint64_t i = 0; i < epochs; ++i) {
    EpochLog e;
    e.loss = r.f64();
    e.recon = r.f64();
    e.kl = r.f64();
    e.rss = r.f64();
    model.log.push_back(e);
  }
  model.final_rss = r.f64();
  return model;
}

void write_dmap(io::ByteWriter& w, const DMapModel& m) {
  write_matrix(w, m.points);
  w.f64(m.epsilon);
  w.f64(m.alpha);
  w.f64(m.t);
  write_vector(w, m.eigenvalues);
  write_matrix(w, m.eigenvectors);
  write_vector(w, m.density);
  w.u32(static_cast<std::uint32_t>(m.selected.size()));
  for (auto s : m.selected) w.u64(s);
  w.f64s(m.residuals);
}

DMapModel read_dmap(io::ByteReader& r) {
  const std::size_t at = r.offset();
  DMapModel m;
  m.points = read_matrix(r);
  m.epsilon = r.f64();
  m.alpha = r.f64();
  m.t = r.f64();
  m.eigenvalues = read_vector(r);
  m.eigenvectors = read_matrix(r);
  m.density = read_vector(r);
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 8) r.fail("selection length exceeds payload");
  for (std::uint32_t i = 0; i < n; ++i) m.selected.push_back(r.u64());
  m.residuals = r.f64s();
  if (m.eigenvectors.rows() != m.points.rows() || m.eigenvectors.cols() != m.eigenvalues.size() ||
      m.density.size() != m.points.rows())
    throw FormatError("inconsistent diffusion map dimensions", at);
  return m;
}

void write_pyramid(io::ByteWriter& w, const PyramidModel& m) {
  write_matrix(w, m.latents);
  w.u64(m.max_levels);
  w.f64(m.stop_tolerance);
  w.u8(m.averaged_duplicates ? 1 : 0);
  w.f64s(m.train_error);
  w.u32(static_cast<std::uint32_t>(m.levels.size()));
  for (const auto& l : m.levels) {
    w.f64(l.sigma);
    write_matrix(w, l.residuals);
  }
}

PyramidModel read_pyramid(io::ByteReader& r) {
  const std::size_t at = r.offset();
  PyramidModel m;
  m.latents = read_matrix(r);
  m.max_levels = r.u64();
  m.stop_tolerance = r.f64();
  m.averaged_duplicates = r.u8() != 0;
  m.train_error = r.f64s();
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 24) r.fail("level count exceeds payload");
  for (std::uint32_t i = 0; i < n; ++i) {
    PyramidLevel l;
    l.sigma = r.f64();
    l.residuals = read_matrix(r);
    if (l.residuals.rows() != m.latents.rows()) throw FormatError("pyramid level rows do not match latents", at);
    m.levels.push_back(std::move(l));
  }
  return m;
}

}  // namespace container

namespace {

void require_end(const io::ByteReader& r) {
  if (!r.at_end()) throw FormatError("trailing bytes after model body", r.offset());
}

template <class Fn>
std::vector<char> wrap(ModelKind kind, Fn&& body) {
  io::ByteWriter w;
  container::write_header(w, kind);
  body(w);
  return w.buffer();
}

}  // namespace

ModelKind peek_model_kind(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  return container::read_header(r);
}

std::vector<char> encode_network(const NetworkModel& model) {
  return wrap(ModelKind::network, [&](io::ByteWriter& w) { container::write_network(w, model); });
}

NetworkModel decode_network(std::span<const char> bytes, std::optional<NetworkFamily> expected) {
  io::ByteReader r(bytes);
  container::expect_kind(r, ModelKind::network);
  const std::size_t family_at = r.offset();
  NetworkModel m = container::read_network(r);
  require_end(r);
  if (expected && m.family != *expected)
    throw FormatError("container holds a " + std::string(family_name(m.family)) + " network, expected " +
                          std::string(family_name(*expected)),
                      family_at);
  return m;
}

std::vector<char> encode_dmap(const DMapModel& model) {
  return wrap(ModelKind::dmap, [&](io::ByteWriter& w) { container::write_dmap(w, model); });
}

DMapModel decode_dmap(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  container::expect_kind(r, ModelKind::dmap);
  DMapModel m = container::read_dmap(r);
  require_end(r);
  return m;
}

std::vector<char> encode_pyramid(const PyramidModel& model) {
  return wrap(ModelKind::pyramid, [&](io::ByteWriter& w) { container::write_pyramid(w, model); });
}

PyramidModel decode_pyramid(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  container::expect_kind(r, ModelKind::pyramid);
  PyramidModel m = container::read_pyramid(r);
  require_end(r);
  return m;
}

void save_network(const NetworkModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_network(model));
}
NetworkModel load_network(const std::filesystem::path& path, std::optional<NetworkFamily> expected) {
  return decode_network(io::read_file(path), expected);
}
void save_dmap(const DMapModel& model, const std::filesystem::path& path) { io::write_file(path, encode_dmap(model)); }
DMapModel load_dmap(const std::filesystem::path& path) { return decode_dmap(io::read_file(path)); }
void save_pyramid(const PyramidModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_pyramid(model));
}
PyramidModel load_pyramid(const std::filesystem::path& path) { return decode_pyramid(io::read_file(path)); }

}  // namespace wavelatent
