#include "fedbcs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedbcs/errors.hpp"

namespace fedbcs {

namespace {

constexpr char kMagic[] = {'F', 'B', 'C', 'S', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("FBCS1: truncated checkpoint");
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  // std::map iterates in sorted identifier order.
  for (const auto& [id, t] : params) {
    put_u64(out, id.size());
    out.insert(out.end(), id.begin(), id.end());
    put_u64(out, t.rank());
    for (auto e : t.shape()) put_u64(out, e);
    for (auto v : t.data()) put_f64(out, static_cast<double>(v));
  }
  return out;
}

NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("FBCS1: bad header");
  }
  std::vector<std::uint8_t> body(bytes.begin() + sizeof(kMagic), bytes.end());
  Reader r(body);
  NamedTensors params;
  std::string previous;
  while (!r.done()) {
    const auto len = r.u64();
    std::string id = r.string(len);
    if (!params.empty() && id <= previous) throw IoError("FBCS1: identifiers not in sorted order at '" + id + "'");
    const auto rank = r.u64();
    if (rank == 0 || rank > 8) throw IoError("FBCS1: implausible rank for '" + id + "'");
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(r.u64());
    const std::size_t n = shape_numel(shape);
    r.need(n * 8);
    std::vector<Real> values(n);
    for (auto& v : values) v = static_cast<Real>(r.f64());
    previous = id;
    params.emplace(std::move(id), Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fedbcs
