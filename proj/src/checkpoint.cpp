#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bsda/errors.hpp"
#include "bsda/numerics.hpp"

namespace bsda::num {

namespace {

constexpr std::string_view kMagic = "BSDACKPT";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t unsigned_le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(unsigned_le(4)); }
  std::uint64_t u64() { return unsigned_le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw DataError("checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_str(out, name);
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for (double v : m.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw DataError("not a checkpoint (bad magic)");
  if (const auto version = r.u32(); version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  for (auto n = r.u32(); n > 0; --n) {
    auto k = r.str();
    ckpt.meta[k] = r.str();
  }
  for (auto n = r.u32(); n > 0; --n) {
    auto name = r.str();
    const auto rows = r.u64();
    const auto cols = r.u64();
    std::vector<double> values(rows * cols);
    for (double& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(const ConstParameterRefs& params, std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto* p : params) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void restore(const Checkpoint& ckpt, const ParameterRefs& params) {
  for (auto* p : params) {
    const auto& m = ckpt.tensor(p->name);
    if (!m.same_shape(p->value))
      throw DataError("checkpoint tensor '" + p->name + "' has shape " + m.shape_string() + ", expected " +
                      p->value.shape_string());
    p->value = m;
    p->zero_grad();
  }
}

}  // namespace bsda::num
