#include "smore/io_container.hpp"

#include <cstring>
#include <fstream>

#include "smore/error.hpp"

namespace smore::io {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'O', 'R', 'E', 'B', 'I', 'N'};
constexpr uint32_t kVersion = 1;

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::C128: return 16;
    case DType::I64: return 8;
    case DType::U8: return 1;
  }
  throw DataError("unknown dtype code");
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64_le(std::vector<uint8_t>& out, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(out, bits);
}

void put_f32_le(std::vector<uint8_t>& out, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_u32(out, bits);
}

// Bounds-checked little-endian reader over a byte buffer.
struct Reader {
  const uint8_t* p;
  std::size_t n;
  std::size_t pos = 0;

  void need(std::size_t k) const {
    if (pos + k > n) throw DataError("container truncated");
  }
  uint16_t u16() {
    need(2);
    const uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::vector<uint8_t> bytes(std::size_t k) {
    need(k);
    std::vector<uint8_t> out(p + pos, p + pos + k);
    pos += k;
    return out;
  }
};

double f64_from_le(const uint8_t* b) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

float f32_from_le(const uint8_t* b) {
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[i]) << (8 * i);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

}  // namespace

std::vector<double> Entry::as_f64() const {
  if (dtype != DType::F64 && dtype != DType::C128)
    throw DataError("entry is not f64/c128 data");
  const std::size_t cnt = bytes.size() / 8;
  std::vector<double> out(cnt);
  for (std::size_t i = 0; i < cnt; ++i) out[i] = f64_from_le(bytes.data() + 8 * i);
  return out;
}

std::vector<float> Entry::as_f32() const {
  if (dtype != DType::F32) throw DataError("entry is not f32 data");
  const std::size_t cnt = bytes.size() / 4;
  std::vector<float> out(cnt);
  for (std::size_t i = 0; i < cnt; ++i) out[i] = f32_from_le(bytes.data() + 4 * i);
  return out;
}

std::vector<int64_t> Entry::as_i64() const {
  if (dtype != DType::I64) throw DataError("entry is not i64 data");
  const std::size_t cnt = bytes.size() / 8;
  std::vector<int64_t> out(cnt);
  for (std::size_t i = 0; i < cnt; ++i) {
    uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(bytes[8 * i + b]) << (8 * b);
    int64_t v;
    std::memcpy(&v, &bits, 8);
    out[i] = v;
  }
  return out;
}

void Container::put_f64(const std::string& name, Shape shape, const std::vector<double>& data) {
  if (data.size() != shape_numel(shape)) throw ShapeError("container f64 size mismatch: " + name);
  Entry e;
  e.dtype = DType::F64;
  e.shape = std::move(shape);
  e.bytes.reserve(8 * data.size());
  for (double x : data) put_f64_le(e.bytes, x);
  entries_[name] = std::move(e);
}

void Container::put_c128(const std::string& name, Shape shape,
                         const std::vector<double>& interleaved) {
  if (interleaved.size() != 2 * shape_numel(shape))
    throw ShapeError("container c128 size mismatch: " + name);
  Entry e;
  e.dtype = DType::C128;
  e.shape = std::move(shape);
  e.bytes.reserve(8 * interleaved.size());
  for (double x : interleaved) put_f64_le(e.bytes, x);
  entries_[name] = std::move(e);
}

void Container::put_f32(const std::string& name, Shape shape, const std::vector<float>& data) {
  if (data.size() != shape_numel(shape)) throw ShapeError("container f32 size mismatch: " + name);
  Entry e;
  e.dtype = DType::F32;
  e.shape = std::move(shape);
  e.bytes.reserve(4 * data.size());
  for (float x : data) put_f32_le(e.bytes, x);
  entries_[name] = std::move(e);
}

void Container::put_i64(const std::string& name, Shape shape, const std::vector<int64_t>& data) {
  if (data.size() != shape_numel(shape)) throw ShapeError("container i64 size mismatch: " + name);
  Entry e;
  e.dtype = DType::I64;
  e.shape = std::move(shape);
  e.bytes.reserve(8 * data.size());
  for (int64_t x : data) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(e.bytes, bits);
  }
  entries_[name] = std::move(e);
}

void Container::put_u8(const std::string& name, Shape shape, const std::vector<uint8_t>& data) {
  if (data.size() != shape_numel(shape)) throw ShapeError("container u8 size mismatch: " + name);
  Entry e;
  e.dtype = DType::U8;
  e.shape = std::move(shape);
  e.bytes = data;
  entries_[name] = std::move(e);
}

const Entry& Container::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("container entry not found: " + name);
  return it->second;
}

void Container::save(const std::string& path) const {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    if (name.size() > 0xffff) throw DataError("container entry name too long");
    put_u16(buf, static_cast<uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(static_cast<uint8_t>(e.dtype));
    buf.push_back(static_cast<uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) put_u64(buf, d);
    if (e.bytes.size() != e.numel() * dtype_size(e.dtype))
      throw DataError("container payload size mismatch: " + name);
    buf.insert(buf.end(), e.bytes.begin(), e.bytes.end());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{buf.data(), buf.size()};

  const auto magic = r.bytes(8);
  if (std::memcmp(magic.data(), kMagic, 8) != 0)
    throw DataError("bad container magic in " + path);
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("unsupported container version " + std::to_string(version) + " in " + path);
  const uint32_t count = r.u32();

  Container c;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    const auto name_bytes = r.bytes(name_len);
    const std::string name(name_bytes.begin(), name_bytes.end());
    const uint8_t dtype_code = r.bytes(1)[0];
    if (dtype_code > static_cast<uint8_t>(DType::U8))
      throw DataError("bad dtype code in " + path);
    Entry e;
    e.dtype = static_cast<DType>(dtype_code);
    const uint8_t rank = r.bytes(1)[0];
    for (uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.u64());
    e.bytes = r.bytes(e.numel() * dtype_size(e.dtype));
    if (c.entries_.count(name)) throw DataError("duplicate container entry: " + name);
    c.entries_[name] = std::move(e);
  }
  if (r.pos != buf.size()) throw DataError("trailing bytes in " + path);
  return c;
}

}  // namespace smore::io
