#include "mmm/numerics/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "mmm/error.hpp"

namespace mmm::nn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>(v & 0xffu));
    v >>= 8;
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string where) : bytes_(bytes), where_(std::move(where)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::format, where_, "checkpoint truncated");
    }
  }

  const std::string& bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) {
      return t;
    }
  }
  throw Error(ErrorKind::format, "checkpoint", "missing tensor '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, std::string_view magic, const nlohmann::json& config,
                     const ParamSet& params) {
  if (magic.size() != 6) {
    throw Error(ErrorKind::value, "save_checkpoint", "magic must be 6 bytes");
  }
  std::string out(magic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  const std::string cfg = config.dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put_u32(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, t] : params.items()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) {
      put_u32(out, static_cast<std::uint32_t>(d));
    }
  }
  for (const auto& [name, t] : params.items()) {
    for (float v : t.values()) {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw Error(ErrorKind::io, "save_checkpoint", "cannot open " + path.string() + " for writing");
  }
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) {
    throw Error(ErrorKind::io, "save_checkpoint", "write to " + path.string() + " failed");
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorKind::io, "load_checkpoint", "cannot open " + path.string());
  }
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, "load_checkpoint(" + path.string() + ")");
  Checkpoint ck;
  ck.magic = r.take(6);
  if (ck.magic != magic) {
    throw Error(ErrorKind::format, "load_checkpoint",
                path.string() + " has magic '" + ck.magic + "', expected '" + std::string(magic) + "'");
  }
  const auto version = static_cast<std::uint8_t>(r.take(1)[0]);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::format, "load_checkpoint", "unsupported version " + std::to_string(version));
  }
  const std::uint32_t cfg_len = r.u32();
  try {
    ck.config = nlohmann::json::parse(r.take(cfg_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "load_checkpoint", std::string("config block: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.take(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) {
      throw Error(ErrorKind::format, "load_checkpoint", "tensor '" + name + "' has invalid rank");
    }
    Shape shape(rank);
    for (auto& d : shape) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 30)) {
        throw Error(ErrorKind::format, "load_checkpoint", "tensor '" + name + "' has invalid dimension");
      }
      d = static_cast<int>(v);
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : manifest) {
    std::vector<float> values(shape_numel(shape));
    for (float& v : values) {
      v = std::bit_cast<float>(r.u32());
    }
    ck.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  if (!r.done()) {
    throw Error(ErrorKind::format, "load_checkpoint", "trailing bytes after payload");
  }
  return ck;
}

void restore(ParamSet& params, const Checkpoint& ckpt) {
  for (const auto& [name, t] : params.items()) {
    const Tensor& src = ckpt.get(name);
    if (src.shape() != t.shape()) {
      throw Error(ErrorKind::shape, "restore", "'" + name + "' expects " + shape_str(t.shape()) + ", checkpoint has " +
                                                   shape_str(src.shape()));
    }
    Tensor dst = t;
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
  }
}

}  // namespace mmm::nn
