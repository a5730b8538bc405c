#include <cmath>
#include <filesystem>

#include "binary_io.hpp"
#include "ega/data_io.hpp"

namespace ega {
namespace {

constexpr std::string_view kEmbeddingMagic = "EGAE";
constexpr std::uint16_t kEmbeddingVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 8 + 8 + 2;

std::size_t dtype_width(Dtype dtype) { return dtype == Dtype::f32 ? 4 : 8; }

}  // namespace

std::vector<char> encode_embeddings(const Matrix& values,
                                    const std::vector<std::uint64_t>& labels,
                                    Dtype dtype) {
  require(labels.size() == values.rows(), ErrorCode::rejected_input,
          "one label per embedding row is required");
  require(values.all_finite(), ErrorCode::rejected_input, "embeddings must be finite");
  require(dtype == Dtype::f32 || dtype == Dtype::f64, ErrorCode::unknown_dtype,
          "unknown dtype");
  detail::ByteWriter w;
  w.raw(kEmbeddingMagic);
  w.u16(kEmbeddingVersion);
  w.u64(values.rows());
  w.u64(values.cols());
  w.u16(static_cast<std::uint16_t>(dtype));
  for (double v : values.values()) {
    if (dtype == Dtype::f32) {
      w.f32(static_cast<float>(v));
    } else {
      w.f64(v);
    }
  }
  for (auto label : labels) w.u64(label);
  return w.bytes();
}

void write_embeddings(const std::string& path, const Matrix& values,
                      const std::vector<std::uint64_t>& labels, Dtype dtype) {
  detail::write_file(path, encode_embeddings(values, labels, dtype));
}

EmbeddingTable read_embeddings(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  require(r.remaining() >= 4, ErrorCode::truncated_payload, "'" + path + "' is truncated");
  require(r.raw(4) == kEmbeddingMagic, ErrorCode::bad_magic,
          "'" + path + "' is not an embedding file");
  require(r.remaining() >= kHeaderBytes - 4, ErrorCode::truncated_payload,
          "'" + path + "' has a truncated header");
  require(r.u16() == kEmbeddingVersion, ErrorCode::rejected_input,
          "unsupported embedding file version");
  const std::uint64_t count = r.u64();
  const std::uint64_t dim = r.u64();
  const auto code = r.u16();
  require(code == 1 || code == 2, ErrorCode::unknown_dtype,
          "unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<Dtype>(code);

  // Reject absurd headers before allocating.
  const long double expected =
      static_cast<long double>(count) * dim * dtype_width(dtype) + 8.0L * count;
  require(expected <= static_cast<long double>(r.remaining()), ErrorCode::truncated_payload,
          "'" + path + "' payload is shorter than its header declares");
  require(expected == static_cast<long double>(r.remaining()), ErrorCode::trailing_bytes,
          "'" + path + "' has bytes past the declared payload");

  EmbeddingTable out{Matrix(count, dim), std::vector<std::uint64_t>(count), dtype};
  for (double& v : out.values.values()) {
    v = dtype == Dtype::f32 ? static_cast<double>(r.f32()) : r.f64();
  }
  for (auto& label : out.labels) label = r.u64();
  return out;
}

void write_dataset(const std::string& dir, const PairDataset& dataset) {
  dataset.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create directory '" + dir + "'");
  write_embeddings(dir + "/queries.egae", dataset.queries, dataset.labels);
  write_embeddings(dir + "/targets.egae", dataset.targets, dataset.labels);
}

PairDataset read_dataset(const std::string& dir) {
  EmbeddingTable queries = read_embeddings(dir + "/queries.egae");
  EmbeddingTable targets = read_embeddings(dir + "/targets.egae");
  require(queries.values.same_shape(targets.values) && queries.labels == targets.labels,
          ErrorCode::rejected_input, "query and target files in '" + dir + "' do not pair up");
  PairDataset out;
  out.queries = std::move(queries.values);
  out.targets = std::move(targets.values);
  out.labels = std::move(queries.labels);
  for (auto label : out.labels) out.num_classes = std::max<std::size_t>(out.num_classes, label + 1);
  out.validate();
  return out;
}

}  // namespace ega
