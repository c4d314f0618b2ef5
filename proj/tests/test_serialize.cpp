#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/serialize.hpp"

using namespace nmt;

namespace {

ModelConfig fixture_config() {
  ModelConfig c;
  c.src_vocab = 8;
  c.tgt_vocab = 8;
  c.d_model = 4;
  c.enc_layers = 2;
  c.dec_layers = 1;
  c.enc_filter = 8;
  c.heads = 2;
  c.max_len = 16;
  c.dropout = 0.1;
  return c;
}

ParameterSet fixture_params(std::uint64_t seed = 9) {
  RandomSource rng(seed);
  return init_parameters(fixture_config(), rng);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

struct TempFile {
  std::string path;
  explicit TempFile(const char* name) : path(std::string("test_serialize_tmp_") + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

// ===== checksum primitive =====

TEST_CASE("crc32 matches the well-known check value") {
  // CRC-32 of the ASCII string "123456789" is the standard check constant.
  CHECK(crc32_bytes("123456789", 9) == 0xCBF43926u);
  CHECK(crc32_bytes("", 0) == 0x00000000u);
}

// ===== checkpoint round trip =====

TEST_CASE("checkpoints round-trip the config and values at f32 precision") {
  TempFile f("ckpt.bin");
  ParameterSet p = fixture_params();
  const std::uint32_t sum = save_checkpoint(f.path, p);
  LoadedCheckpoint loaded = load_checkpoint(f.path);
  CHECK(loaded.checksum == sum);
  CHECK(loaded.params.config.src_vocab == 8);
  CHECK(loaded.params.config.d_model == 4);
  CHECK(loaded.params.config.enc_filter == 8);
  CHECK(loaded.params.config.dropout == doctest::Approx(0.1));
  REQUIRE(loaded.params.tensors.size() == p.tensors.size());
  for (const auto& [name, t] : p.tensors) {
    const Tensor& l = loaded.params.at(name);
    REQUIRE(l.same_shape(t));
    for (std::size_t i = 0; i < t.numel(); ++i)
      CHECK(l.at(i) == doctest::Approx(t.at(i)).epsilon(1e-6));
  }
}

TEST_CASE("saving twice produces identical bytes and no stray temp file") {
  TempFile a("ckpt_a.bin"), b("ckpt_b.bin");
  ParameterSet p = fixture_params();
  save_checkpoint(a.path, p);
  save_checkpoint(b.path, p);
  CHECK(read_bytes(a.path) == read_bytes(b.path));
  CHECK_FALSE(std::filesystem::exists(a.path + ".tmp"));
}

TEST_CASE("a reloaded checkpoint saves back byte-identically") {
  TempFile a("ckpt_c.bin"), b("ckpt_d.bin");
  save_checkpoint(a.path, fixture_params());
  LoadedCheckpoint loaded = load_checkpoint(a.path);
  save_checkpoint(b.path, loaded.params);
  CHECK(read_bytes(a.path) == read_bytes(b.path));
}

// ===== corruption detection =====

TEST_CASE("a flipped payload byte is caught by the checksum") {
  TempFile f("ckpt_flip.bin");
  save_checkpoint(f.path, fixture_params());
  std::vector<std::uint8_t> bytes = read_bytes(f.path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_bytes(f.path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), "file: checksum mismatch", FormatError);
}

TEST_CASE("truncation is caught") {
  TempFile f("ckpt_trunc.bin");
  save_checkpoint(f.path, fixture_params());
  std::vector<std::uint8_t> bytes = read_bytes(f.path);
  bytes.resize(bytes.size() - 9);
  write_bytes(f.path, bytes);
  CHECK_THROWS_AS(load_checkpoint(f.path), FormatError);
  write_bytes(f.path, {0x01, 0x02});
  CHECK_THROWS_AS(load_checkpoint(f.path), FormatError);
}

TEST_CASE("a wrong magic is rejected") {
  TempFile f("ckpt_magic.bin");
  save_checkpoint(f.path, fixture_params());
  std::vector<std::uint8_t> bytes = read_bytes(f.path);
  bytes[0] = 'X';
  // Re-stamp the trailing checksum so only the magic is wrong.
  const std::uint32_t sum = crc32_bytes(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<std::uint8_t>(sum >> (8 * i));
  write_bytes(f.path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), "file: not a checkpoint file", FormatError);
}

TEST_CASE("a bumped format version is rejected") {
  TempFile f("ckpt_ver.bin");
  save_checkpoint(f.path, fixture_params());
  std::vector<std::uint8_t> bytes = read_bytes(f.path);
  bytes[4] = 2;  // little-endian u32 version right after the 4-byte magic
  const std::uint32_t sum = crc32_bytes(bytes.data(), bytes.size() - 4);
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<std::uint8_t>(sum >> (8 * i));
  write_bytes(f.path, bytes);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path), "file: unsupported format version 2", FormatError);
}

TEST_CASE("an offset file does not load as a checkpoint") {
  TempFile f("off_as_ckpt.bin");
  save_offsets(f.path, {}, 1234);
  CHECK_THROWS_AS(load_checkpoint(f.path), FormatError);
}

// ===== offset files =====

TEST_CASE("offset files round-trip all three entry kinds") {
  TempFile f("offsets.bin");
  OffsetSet offsets;
  offsets["enc.0.att.wq"] = OffsetEntry::zero();
  Tensor dense = Tensor::from({2, 2}, {0.5, -1.25, 3.0, 0.0});
  offsets["dec.0.filter.w"] = OffsetEntry::dense(dense);
  offsets["out_proj"] =
      OffsetEntry::sparse_rows({1, 2, 5}, Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}), {8, 2});
  save_offsets(f.path, offsets, 0xDEADBEEFu);

  LoadedOffsets loaded = load_offsets(f.path);
  CHECK(loaded.baseline_checksum == 0xDEADBEEFu);
  REQUIRE(loaded.offsets.size() == 3);
  CHECK(loaded.offsets.at("enc.0.att.wq").is_zero());

  const OffsetEntry& d = loaded.offsets.at("dec.0.filter.w");
  REQUIRE(d.kind == OffsetEntry::Kind::dense);
  for (std::size_t i = 0; i < 4; ++i) CHECK(d.values.at(i) == doctest::Approx(dense.at(i)));

  const OffsetEntry& s = loaded.offsets.at("out_proj");
  REQUIRE(s.kind == OffsetEntry::Kind::sparse_rows);
  CHECK(s.row_ids == std::vector<std::size_t>{1, 2, 5});
  CHECK(s.full_shape == std::vector<std::size_t>{8, 2});
  CHECK(s.values.at(2, 1) == doctest::Approx(6.0));
}

TEST_CASE("zero entries store only the name and kind tag") {
  // Every tensor of a production-sized model as a zero offset must still give
  // a file well under eight kibibytes.
  ModelConfig big;
  big.src_vocab = 40000;
  big.tgt_vocab = 40000;
  big.d_model = 256;
  big.enc_layers = 6;
  big.dec_layers = 3;
  big.enc_filter = 512;
  big.heads = 4;
  big.max_len = 256;
  TempFile f("offsets_zero.bin");
  OffsetSet offsets;
  for (const auto& name : tensor_names(big)) offsets[name] = OffsetEntry::zero();
  save_offsets(f.path, offsets, 77);
  CHECK(std::filesystem::file_size(f.path) < 8192);
  LoadedOffsets loaded = load_offsets(f.path);
  CHECK(loaded.offsets.size() == offsets.size());
  for (const auto& [name, entry] : loaded.offsets) CHECK(entry.is_zero());
}

TEST_CASE("offset corruption and type confusion are caught") {
  TempFile f("offsets_bad.bin");
  OffsetSet offsets;
  offsets["out_proj"] = OffsetEntry::dense(Tensor::full({4, 2}, 1.0));
  save_offsets(f.path, offsets, 5);
  std::vector<std::uint8_t> bytes = read_bytes(f.path);
  bytes[bytes.size() / 2] ^= 0x01;
  write_bytes(f.path, bytes);
  CHECK_THROWS_WITH_AS(load_offsets(f.path), "file: checksum mismatch", FormatError);

  TempFile g("ckpt_as_off.bin");
  save_checkpoint(g.path, fixture_params());
  CHECK_THROWS_AS(load_offsets(g.path), FormatError);
}
