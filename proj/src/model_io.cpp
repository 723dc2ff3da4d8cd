#include "deepstruct/model_io.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

#include "deepstruct/checksum.hpp"

namespace deepstruct {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'M', 'O', 'D', 'E', 'L', '1'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xFF);
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xFF);
}

// Sequential reader with bounds checking; every primitive throws on overrun.
struct Cursor {
  const unsigned char* p;
  std::size_t left;
  const std::string& path;

  void need(std::size_t n) const {
    if (left < n) throw ValidationError("truncated model file '" + path + "'");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

}  // namespace

void save_model(const std::string& path, const Model& m) {
  std::string cfg = serialize_config(m.doc);
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, 1);
  put_u64(buf, config_hash(m.doc));
  put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
  buf.insert(buf.end(), cfg.begin(), cfg.end());
  put_u32(buf, static_cast<std::uint32_t>(m.params.names.size()));
  for (std::size_t t = 0; t < m.params.names.size(); ++t) {
    const std::string& name = m.params.names[t];
    const Tensor& v = m.params.value[t];
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u32(buf, static_cast<std::uint32_t>(v.shape.size()));
    for (int d : v.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    std::size_t off = buf.size();
    buf.resize(off + v.v.size() * 8);
    std::memcpy(buf.data() + off, v.v.data(), v.v.size() * 8);
  }
  put_u32(buf, crc32(buf.data(), buf.size()));

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::size_t n = std::fwrite(buf.data(), 1, buf.size(), f);
  bool ok = n == buf.size() && std::fclose(f) == 0;
  if (!ok) throw IoError("short write to '" + path + "'");
}

Model load_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> buf(size > 0 ? size : 0);
  std::size_t n = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (n != buf.size()) throw IoError("short read from '" + path + "'");

  if (buf.size() < 8 + 4 + 8 + 4 + 4 + 4)
    throw ValidationError("truncated model file '" + path + "'");
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw ValidationError("bad magic in model file '" + path + "'");
  std::uint32_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != crc32(buf.data(), buf.size() - 4))
    throw ValidationError("checksum mismatch in model file '" + path + "'");

  Cursor c{buf.data() + 8, buf.size() - 12, path};
  std::uint32_t version = c.u32();
  if (version != 1)
    throw ValidationError("unsupported model version " + std::to_string(version));
  std::uint64_t hash = c.u64();
  std::string cfg_text = c.str(c.u32());

  ConfigDoc doc = parse_config(cfg_text);
  if (config_hash(doc) != hash)
    throw ValidationError("config hash mismatch in model file '" + path + "'");
  Model m = build_model(doc);

  std::uint32_t count = c.u32();
  if (count != m.params.names.size())
    throw ValidationError("model file '" + path + "' holds " + std::to_string(count) +
                          " tensors but its config declares " +
                          std::to_string(m.params.names.size()));
  std::vector<char> seen(count, 0);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = c.str(c.u32());
    std::uint32_t ndim = c.u32();
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(c.u32());
    int id = m.params.find(name);
    if (id < 0)
      throw ValidationError("model file tensor '" + name + "' not declared by its config");
    if (m.params.value[id].shape != shape)
      throw ValidationError("model file tensor '" + name + "' has the wrong shape");
    if (seen[id]) throw ValidationError("model file tensor '" + name + "' repeated");
    seen[id] = 1;
    c.raw(m.params.value[id].v.data(), m.params.value[id].v.size() * 8);
  }
  if (c.left != 0) throw ValidationError("trailing bytes in model file '" + path + "'");
  return m;
}

}  // namespace deepstruct
