#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smore/tensor.hpp"

namespace smore::io {

// Self-describing binary container used for checkpoints and graph caches:
//   magic "SMOREBIN", u32 version (1), u32 entry count, then per entry
//   u16 name length, name bytes, u8 dtype, u8 rank, u64 dims, payload.
// All integers and payloads are little-endian regardless of host order.
enum class DType : uint8_t { F32 = 0, F64 = 1, C128 = 2, I64 = 3, U8 = 4 };

struct Entry {
  DType dtype = DType::F64;
  Shape shape;
  // Raw little-endian payload bytes; use the typed accessors below.
  std::vector<uint8_t> bytes;

  std::size_t numel() const { return shape_numel(shape); }
  std::vector<double> as_f64() const;     // F64 or C128 (interleaved)
  std::vector<float> as_f32() const;
  std::vector<int64_t> as_i64() const;
};

class Container {
 public:
  void put_f64(const std::string& name, Shape shape, const std::vector<double>& data);
  void put_c128(const std::string& name, Shape shape, const std::vector<double>& interleaved);
  void put_f32(const std::string& name, Shape shape, const std::vector<float>& data);
  void put_i64(const std::string& name, Shape shape, const std::vector<int64_t>& data);
  void put_u8(const std::string& name, Shape shape, const std::vector<uint8_t>& data);

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& get(const std::string& name) const;  // throws DataError if absent
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // Serialization is deterministic: entries are written in name order.
  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace smore::io
