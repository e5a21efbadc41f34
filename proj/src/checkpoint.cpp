#include "posereg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "posereg/errors.hpp"

namespace posereg {

namespace {

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    auto p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  template <typename T>
  void le(T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    raw(buf, sizeof(T));
  }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  void raw(void* out, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated file at byte " + std::to_string(pos_));
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    std::uint8_t buf[sizeof(T)];
    raw(buf, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return le<double>(); }
  std::string str() {
    auto n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void check_magic(ByteReader& r, const char* magic, const std::string& what) {
  char got[8];
  r.raw(got, 8);
  if (std::memcmp(got, magic, 8) != 0) throw FormatError(what + ": bad magic");
}

}  // namespace

std::uint64_t Checkpoint::parameter_bytes() const {
  std::uint64_t n = 0;
  for (const auto& p : params) n += p.values.size() * sizeof(double);
  return n;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.str(ckpt.config_digest);
  w.u64(ckpt.epochs_completed);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (p.values.size() != shape_numel(p.shape) || p.velocity.size() != p.values.size()) {
      throw std::invalid_argument("checkpoint record " + p.name + " is inconsistent with shape " +
                                  shape_to_string(p.shape));
    }
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto e : p.shape) w.u64(e);
    for (double v : p.values) w.f64(v);
    for (double v : p.velocity) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  check_magic(r, kCheckpointMagic, "checkpoint");
  if (auto version = r.u32(); version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_digest = r.str();
  ckpt.epochs_completed = r.u64();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ParameterRecord p;
    p.name = r.str();
    const auto rank = r.u32();
    for (std::uint32_t a = 0; a < rank; ++a) p.shape.push_back(r.u64());
    const auto n = shape_numel(p.shape);
    p.values.resize(n);
    p.velocity.resize(n);
    for (auto& v : p.values) v = r.f64();
    for (auto& v : p.velocity) v = r.f64();
    ckpt.params.push_back(std::move(p));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint records");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  spit(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(slurp(path));
}

void write_mean_image(const std::filesystem::path& path, const Tensor& mean) {
  ByteWriter w;
  w.raw("PRMEAN01", 8);
  w.u32(static_cast<std::uint32_t>(mean.shape().size()));
  for (auto e : mean.shape()) w.u64(e);
  for (double v : mean.values()) w.f64(v);
  spit(path, w.take());
}

Tensor read_mean_image(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  ByteReader r(bytes);
  check_magic(r, "PRMEAN01", "mean image");
  Shape shape(r.u32());
  for (auto& e : shape) e = r.u64();
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = r.f64();
  if (!r.done()) throw FormatError("trailing bytes after mean image");
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace posereg
