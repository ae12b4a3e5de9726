#include "dflow/io_store.hpp"

#include "dflow/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dflow {

namespace {

using Code = IoError::Code;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_ += s; }
  void plane(const Plane& p) {
    for (Eigen::Index k = 0; k < p.size(); ++k) f64(p.data()[k]);
  }
  void text(const std::string& s) {
    u64(s.size());
    bytes(s);
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& s, std::size_t pos) : s_(s), pos_(pos) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(static_cast<std::uint8_t>(s_[pos_++])) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(static_cast<std::uint8_t>(s_[pos_++])) << (8 * b);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const std::uint64_t n = u64();
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  Plane plane(const Grid& g) {
    need(8 * g.size());
    Plane p(g.ny(), g.nx());
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = f64();
    return p;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > s_.size() - pos_) throw IoError(Code::Truncated, "archive payload is truncated");
  }
  const std::string& s_;
  std::size_t pos_;
};

std::string with_header(ArchiveKind kind, std::uint64_t nx, std::uint64_t ny, std::uint32_t channels,
                        const std::string& payload) {
  Writer w;
  w.bytes("DFLO");
  w.u32(kArchiveVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(nx);
  w.u64(ny);
  w.u32(channels);
  w.u64(payload.size());
  w.bytes(payload);
  return std::move(w.str());
}

Grid header_grid(const ArchiveHeader& h) {
  try {
    return Grid(static_cast<int>(h.nx), static_cast<int>(h.ny));
  } catch (const DomainError& e) {
    throw IoError(Code::Malformed, std::string("archive grid is invalid: ") + e.what());
  }
}

ArchiveHeader expect(const std::string& bytes, ArchiveKind kind) {
  const ArchiveHeader h = decode_header(bytes);
  if (h.kind != kind) throw IoError(Code::KindMismatch, "archive holds a different kind of object");
  const std::uint64_t have = bytes.size() - kHeaderBytes;
  if (have < h.payload_length) throw IoError(Code::Truncated, "archive payload is truncated");
  if (have > h.payload_length) throw IoError(Code::Malformed, "archive has trailing bytes");
  return h;
}

void write_map_planes(Writer& w, const DiffeoMap& m) {
  for (int k = 0; k < DiffeoMap::kPlanes; ++k) w.plane(m.plane(k));
}

DiffeoMap read_map_planes(Reader& r, const Grid& g) {
  std::array<Plane, DiffeoMap::kPlanes> planes;
  for (auto& p : planes) p = r.plane(g);
  try {
    return {g, std::move(planes)};
  } catch (const InvalidFieldError& e) {
    throw IoError(Code::Malformed, std::string("archive map is invalid: ") + e.what());
  }
}

void write_chain_payload(Writer& w, const MapChain& c) {
  w.u64(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) write_map_planes(w, c[i]);
}

MapChain read_chain_payload(Reader& r, const std::optional<Grid>& g) {
  const std::uint64_t n = r.u64();
  MapChain c;
  if (n > 0 && !g) throw IoError(Code::Malformed, "non-empty chain without a grid");
  for (std::uint64_t i = 0; i < n; ++i) c.push_back(read_map_planes(r, *g));
  return c;
}

void finish(const Reader& r) {
  if (!r.done()) throw IoError(Code::Malformed, "archive payload has unread bytes");
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(Code::Malformed, std::string("archive metadata: ") + e.what());
  }
}

nlohmann::json parse_json(const std::string& s) {
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(Code::Malformed, std::string("archive metadata is not JSON: ") + e.what());
  }
}

}  // namespace

ArchiveHeader decode_header(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "DFLO") != 0) {
    throw IoError(Code::MagicMismatch, "not a dflo archive (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) throw IoError(Code::Truncated, "archive header is truncated");
  Reader r(bytes, 4);
  ArchiveHeader h;
  h.version = r.u32();
  if (h.version != kArchiveVersion) {
    throw IoError(Code::VersionMismatch, "unsupported archive version " + std::to_string(h.version));
  }
  const std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 5) throw IoError(Code::KindMismatch, "unknown archive kind " + std::to_string(kind));
  h.kind = static_cast<ArchiveKind>(kind);
  h.nx = r.u64();
  h.ny = r.u64();
  h.channels = r.u32();
  h.payload_length = r.u64();
  return h;
}

std::string encode_field(const PeriodicField& field) {
  Writer w;
  for (int c = 0; c < field.channels(); ++c) w.plane(field.channel(c));
  return with_header(ArchiveKind::Field, field.grid().nx(), field.grid().ny(), field.channels(), w.str());
}

PeriodicField decode_field(const std::string& bytes) {
  const ArchiveHeader h = expect(bytes, ArchiveKind::Field);
  const Grid g = header_grid(h);
  if (h.channels < 1) throw IoError(Code::Malformed, "field archive has no channels");
  Reader r(bytes, kHeaderBytes);
  std::vector<Plane> planes;
  for (std::uint32_t c = 0; c < h.channels; ++c) planes.push_back(r.plane(g));
  finish(r);
  return {g, std::move(planes)};
}

std::string encode_map(const DiffeoMap& map) {
  Writer w;
  write_map_planes(w, map);
  return with_header(ArchiveKind::Map, map.grid().nx(), map.grid().ny(), DiffeoMap::kPlanes, w.str());
}

DiffeoMap decode_map(const std::string& bytes) {
  const ArchiveHeader h = expect(bytes, ArchiveKind::Map);
  if (h.channels != DiffeoMap::kPlanes) throw IoError(Code::Malformed, "map archive must hold 8 planes");
  Reader r(bytes, kHeaderBytes);
  DiffeoMap m = read_map_planes(r, header_grid(h));
  finish(r);
  return m;
}

std::string encode_chain(const MapChain& chain) {
  Writer w;
  write_chain_payload(w, chain);
  const auto g = chain.grid();
  return with_header(ArchiveKind::Chain, g ? g->nx() : 0, g ? g->ny() : 0, DiffeoMap::kPlanes, w.str());
}

MapChain decode_chain(const std::string& bytes) {
  const ArchiveHeader h = expect(bytes, ArchiveKind::Chain);
  std::optional<Grid> g;
  if (h.nx != 0 || h.ny != 0) g = header_grid(h);
  Reader r(bytes, kHeaderBytes);
  MapChain c = read_chain_payload(r, g);
  finish(r);
  return c;
}

std::string encode_trajectory(const Trajectory& t, bool with_chain) {
  nlohmann::json meta{{"dt", t.dt},
                      {"seed", t.meta.seed},
                      {"solver", t.meta.solver},
                      {"remap_every", t.meta.remap_every},
                      {"solver_dt", t.meta.solver_dt}};
  const int channels = t.frames.empty() ? 1 : t.frames.front().channels();
  Writer w;
  w.text(meta.dump());
  w.u64(t.frames.size());
  for (const auto& f : t.frames) {
    if (!(f.grid() == t.grid) || f.channels() != channels) {
      throw InvalidFieldError("trajectory frames must share grid and channel count");
    }
    for (int c = 0; c < channels; ++c) w.plane(f.channel(c));
  }
  const bool chain = with_chain && !t.submaps.empty();
  w.u8(chain ? 1 : 0);
  if (chain) write_chain_payload(w, t.submaps);
  return with_header(ArchiveKind::Trajectory, t.grid.nx(), t.grid.ny(), static_cast<std::uint32_t>(channels), w.str());
}

Trajectory decode_trajectory(const std::string& bytes) {
  const ArchiveHeader h = expect(bytes, ArchiveKind::Trajectory);
  const Grid g = header_grid(h);
  if (h.channels < 1) throw IoError(Code::Malformed, "trajectory archive has no channels");
  Reader r(bytes, kHeaderBytes);
  const nlohmann::json meta = parse_json(r.text());
  Trajectory t(g);
  t.dt = json_get<double>(meta, "dt");
  t.meta.seed = json_get<std::uint64_t>(meta, "seed");
  t.meta.solver = json_get<std::string>(meta, "solver");
  t.meta.remap_every = json_get<int>(meta, "remap_every");
  t.meta.solver_dt = json_get<double>(meta, "solver_dt");
  const std::uint64_t n = r.u64();
  for (std::uint64_t k = 0; k < n; ++k) {
    std::vector<Plane> planes;
    for (std::uint32_t c = 0; c < h.channels; ++c) planes.push_back(r.plane(g));
    t.frames.emplace_back(g, std::move(planes));
  }
  const std::uint8_t has_chain = r.u8();
  if (has_chain > 1) throw IoError(Code::Malformed, "bad chain flag in trajectory archive");
  if (has_chain) t.submaps = read_chain_payload(r, g);
  finish(r);
  return t;
}

std::string encode_lifter(const SpectralLifter& lifter) {
  const Eigen::MatrixXd& W = lifter.weights();
  nlohmann::json meta{{"kind", lifter.kind()},     {"window", lifter.window()}, {"k_feat", lifter.k_feat()},
                      {"ridge", lifter.ridge()},   {"rows", W.rows()},          {"cols", W.cols()}};
  Writer w;
  w.text(meta.dump());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) w.f64(W(i, j));
  }
  return with_header(ArchiveKind::Lifter, lifter.grid().nx(), lifter.grid().ny(), DiffeoMap::kPlanes, w.str());
}

SpectralLifter decode_lifter(const std::string& bytes) {
  const ArchiveHeader h = expect(bytes, ArchiveKind::Lifter);
  const Grid g = header_grid(h);
  Reader r(bytes, kHeaderBytes);
  const nlohmann::json meta = parse_json(r.text());
  if (json_get<std::string>(meta, "kind") != "spectral") throw IoError(Code::Malformed, "unsupported lifter kind");
  const auto rows = json_get<Eigen::Index>(meta, "rows");
  const auto cols = json_get<Eigen::Index>(meta, "cols");
  if (rows < 0 || cols < 0) throw IoError(Code::Malformed, "negative weight shape");
  Eigen::MatrixXd W(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = r.f64();
  }
  finish(r);
  try {
    return SpectralLifter(g, json_get<int>(meta, "window"), json_get<int>(meta, "k_feat"),
                          json_get<double>(meta, "ridge"), std::move(W));
  } catch (const std::invalid_argument& e) {
    throw IoError(Code::Malformed, std::string("lifter archive is inconsistent: ") + e.what());
  } catch (const std::domain_error& e) {
    throw IoError(Code::Malformed, std::string("lifter archive is inconsistent: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(Code::Open, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(Code::Open, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(Code::Open, "write failed for " + path.string());
}

ArchiveHeader read_header(const std::filesystem::path& path) { return decode_header(read_file(path)); }

void save_field(const std::filesystem::path& p, const PeriodicField& f) { write_file(p, encode_field(f)); }
PeriodicField load_field(const std::filesystem::path& p) { return decode_field(read_file(p)); }
void save_map(const std::filesystem::path& p, const DiffeoMap& m) { write_file(p, encode_map(m)); }
DiffeoMap load_map(const std::filesystem::path& p) { return decode_map(read_file(p)); }
void save_chain(const std::filesystem::path& p, const MapChain& c) { write_file(p, encode_chain(c)); }
MapChain load_chain(const std::filesystem::path& p) { return decode_chain(read_file(p)); }
void save_trajectory(const std::filesystem::path& p, const Trajectory& t, bool with_chain) {
  write_file(p, encode_trajectory(t, with_chain));
}
Trajectory load_trajectory(const std::filesystem::path& p) { return decode_trajectory(read_file(p)); }
void save_lifter(const std::filesystem::path& p, const SpectralLifter& l) { write_file(p, encode_lifter(l)); }
SpectralLifter load_lifter(const std::filesystem::path& p) { return decode_lifter(read_file(p)); }

}  // namespace dflow
