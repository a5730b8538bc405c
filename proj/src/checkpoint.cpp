#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "ega/encoder.hpp"

namespace ega {
namespace detail {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot create '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::io, "write to '" + path + "' failed");
}

}  // namespace detail

namespace {
constexpr std::string_view kCheckpointMagic = "EGAP";
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

// Layout: "EGAP", u16 version, u16 encoder kind, u64 width count, u64 widths,
// then per layer the row-major weights and the bias as f64.
void write_checkpoint(const std::string& path, const EncoderParams& params) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(params.kind));
  w.u64(params.widths.size());
  for (std::size_t width : params.widths) w.u64(width);
  for (const auto& layer : params.layers) {
    for (double v : layer.weights.values()) w.f64(v);
    for (double v : layer.bias) w.f64(v);
  }
  detail::write_file(path, w.bytes());
}

EncoderParams read_checkpoint(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  require(r.remaining() >= 4 && r.raw(4) == kCheckpointMagic, ErrorCode::bad_magic,
          "'" + path + "' is not an encoder checkpoint");
  require(r.u16() == kCheckpointVersion, ErrorCode::rejected_input,
          "unsupported checkpoint version");
  const auto kind = static_cast<EncoderKind>(r.u16());
  require(kind == EncoderKind::mlp || kind == EncoderKind::table, ErrorCode::rejected_input,
          "unknown encoder kind in checkpoint");
  const std::uint64_t count = r.u64();
  require(count >= 2 && count <= 64, ErrorCode::rejected_input, "bad width count");
  std::vector<std::size_t> widths(count);
  for (auto& width : widths) {
    width = r.u64();
    require(width >= 1 && width <= (1ULL << 24), ErrorCode::rejected_input,
            "bad layer width in checkpoint");
  }
  std::uint64_t payload = 0;
  if (kind == EncoderKind::table) {
    require(count == 2, ErrorCode::rejected_input, "table checkpoint needs two widths");
    payload = widths[0] * widths[1];
  } else {
    for (std::size_t l = 0; l + 1 < count; ++l) payload += (widths[l] + 1) * widths[l + 1];
  }
  require(r.remaining() >= payload * 8, ErrorCode::truncated_payload, "checkpoint is truncated");
  require(r.remaining() == payload * 8, ErrorCode::trailing_bytes,
          "checkpoint has trailing bytes");

  EncoderParams params = kind == EncoderKind::table ? init_table(widths[0], widths[1], 0)
                                                    : init_encoder(widths, 0);
  for (auto& layer : params.layers) {
    for (double& v : layer.weights.values()) v = r.f64();
    for (double& v : layer.bias) v = r.f64();
  }
  return params;
}

}  // namespace ega
