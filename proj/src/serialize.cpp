#include "nmt/serialize.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace nmt {

namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr char kCheckpointMagic[4] = {'N', 'M', 'T', 'B'};
constexpr char kOffsetMagic[4] = {'N', 'M', 'T', 'O'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  return table;
}

}  // namespace

std::uint32_t crc32_bytes(const void* data, std::size_t len) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = crc_table()[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

// ===== byte buffer writer =====

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void name(const std::string& s) {
    if (s.size() > 0xFFFF) throw FormatError("file: tensor name too long");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor_payload(const Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) f32(static_cast<float>(t.at(i)));
  }
};

void write_file_atomic(const std::string& path, Writer& w) {
  // Checksum over everything written so far, then temp-write and rename.
  const std::uint32_t sum = crc32_bytes(w.bytes.data(), w.bytes.size());
  w.u32(sum);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("file: cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw DataError("file: short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("file: cannot rename into " + path);
}

// ===== bounds-checked reader =====

struct Reader {
  std::vector<std::uint8_t> bytes;
  std::size_t pos = 0;

  explicit Reader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file: cannot open " + path);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw FormatError("file: truncated record");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string name() {
    const std::uint16_t len = u16();
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    return s;
  }

  // Verifies the trailing checksum before any parsing.
  void check_crc() {
    if (bytes.size() < 4) throw FormatError("file: too short");
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    if (crc32_bytes(bytes.data(), bytes.size() - 4) != stored)
      throw FormatError("file: checksum mismatch");
    bytes.resize(bytes.size() - 4);
  }

  void check_magic(const char expect[4], const char* what) {
    need(4);
    if (std::memcmp(bytes.data() + pos, expect, 4) != 0)
      throw FormatError(std::string("file: not ") + what + " file");
    pos += 4;
  }

  void check_version() {
    const std::uint32_t v = u32();
    if (v != kFormatVersion)
      throw FormatError("file: unsupported format version " + std::to_string(v));
  }

  void check_consumed() const {
    if (pos != bytes.size()) throw FormatError("file: trailing bytes");
  }
};

std::vector<std::size_t> read_shape(Reader& r) {
  const std::uint8_t rank = r.u8();
  if (rank == 0 || rank > 2) throw FormatError("file: unsupported tensor rank");
  std::vector<std::size_t> shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = r.u32();
    if (shape[i] == 0) throw FormatError("file: zero tensor dimension");
  }
  return shape;
}

Tensor read_tensor(Reader& r, const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < n; ++i) t.at(i) = static_cast<double>(r.f32());
  return t;
}

void write_shape(Writer& w, const std::vector<std::size_t>& shape) {
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

std::uint32_t save_checkpoint(const std::string& path, const ParameterSet& params) {
  params.config.validate();
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kFormatVersion);
  const ModelConfig& c = params.config;
  for (std::size_t v : {c.src_vocab, c.tgt_vocab, c.d_model, c.enc_layers, c.dec_layers,
                        c.enc_filter, c.heads, c.max_len})
    w.u32(static_cast<std::uint32_t>(v));
  w.f32(static_cast<float>(c.dropout));
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    w.name(name);
    write_shape(w, t.shape);
    w.tensor_payload(t);
  }
  const std::uint32_t sum = crc32_bytes(w.bytes.data(), w.bytes.size());
  write_file_atomic(path, w);
  return sum;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  r.check_crc();
  const std::uint32_t checksum = crc32_bytes(r.bytes.data(), r.bytes.size());
  r.check_magic(kCheckpointMagic, "a checkpoint");
  r.check_version();

  ModelConfig c;
  c.src_vocab = r.u32();
  c.tgt_vocab = r.u32();
  c.d_model = r.u32();
  c.enc_layers = r.u32();
  c.dec_layers = r.u32();
  c.enc_filter = r.u32();
  c.heads = r.u32();
  c.max_len = r.u32();
  c.dropout = static_cast<double>(r.f32());
  c.validate();

  ParameterSet params;
  params.config = c;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.name();
    const std::vector<std::size_t> shape = read_shape(r);
    if (!params.tensors.emplace(name, read_tensor(r, shape)).second)
      throw FormatError("file: duplicate tensor " + name);
  }
  r.check_consumed();

  // The stored tensor set must be exactly the naming scheme of the config,
  // with every shape matching.
  const auto expected = tensor_shapes(c);
  if (params.tensors.size() != expected.size())
    throw FormatError("file: tensor set does not match model config");
  for (const auto& [name, shape] : expected) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end())
      throw FormatError("file: missing tensor " + name);
    if (it->second.shape != shape)
      throw FormatError("file: wrong shape for tensor " + name);
  }
  return {std::move(params), checksum};
}

void save_offsets(const std::string& path, const OffsetSet& offsets,
                  std::uint32_t baseline_checksum) {
  Writer w;
  w.raw(kOffsetMagic, 4);
  w.u32(kFormatVersion);
  w.u32(baseline_checksum);
  w.u32(static_cast<std::uint32_t>(offsets.size()));
  for (const auto& [name, entry] : offsets) {
    w.name(name);
    w.u8(static_cast<std::uint8_t>(entry.kind));
    switch (entry.kind) {
      case OffsetEntry::Kind::zero:
        break;  // name and kind tag only
      case OffsetEntry::Kind::dense:
        write_shape(w, entry.values.shape);
        w.tensor_payload(entry.values);
        break;
      case OffsetEntry::Kind::sparse_rows:
        write_shape(w, entry.full_shape);
        w.u32(static_cast<std::uint32_t>(entry.row_ids.size()));
        for (std::size_t id : entry.row_ids) w.u32(static_cast<std::uint32_t>(id));
        w.tensor_payload(entry.values);
        break;
    }
  }
  write_file_atomic(path, w);
}

LoadedOffsets load_offsets(const std::string& path) {
  Reader r(path);
  r.check_crc();
  r.check_magic(kOffsetMagic, "an offset");
  r.check_version();

  LoadedOffsets out;
  out.baseline_checksum = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.name();
    const std::uint8_t kind = r.u8();
    OffsetEntry entry;
    switch (kind) {
      case 0:
        entry = OffsetEntry::zero();
        break;
      case 1:
        entry = OffsetEntry::dense(read_tensor(r, read_shape(r)));
        break;
      case 2: {
        std::vector<std::size_t> shape = read_shape(r);
        if (shape.size() != 2) throw FormatError("file: sparse rows need a 2-D shape");
        const std::uint32_t rows = r.u32();
        std::vector<std::size_t> ids(rows);
        for (std::uint32_t k = 0; k < rows; ++k) ids[k] = r.u32();
        Tensor payload = read_tensor(r, {rows, shape[1]});
        entry = OffsetEntry::sparse_rows(std::move(ids), std::move(payload), std::move(shape));
        break;
      }
      default:
        throw FormatError("file: unknown offset kind tag");
    }
    if (!out.offsets.emplace(name, std::move(entry)).second)
      throw FormatError("file: duplicate offset entry " + name);
  }
  r.check_consumed();
  return out;
}

void require_matching_baseline(const LoadedOffsets& offsets, std::uint32_t baseline_checksum) {
  if (offsets.baseline_checksum != baseline_checksum)
    throw CompatibilityError("file: offsets were built against a different baseline checkpoint");
}

}  // namespace nmt
