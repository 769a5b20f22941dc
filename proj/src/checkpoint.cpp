#include <map>

#include "binary_io.hpp"
#include "pla/common.hpp"
#include "pla/model.hpp"

namespace pla {

namespace {

constexpr std::string_view kCheckpointMagic = "PLAM";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  io::Writer w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  std::uint32_t blocks = 0;
  ckpt.params.for_each([&](const std::string&, const Eigen::MatrixXd&) { ++blocks; });
  w.u32(blocks);
  ckpt.params.for_each([&](const std::string& name, const Eigen::MatrixXd& m) {
    w.str(name);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
  });
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  return w.bytes();
}

Checkpoint checkpoint_from_bytes(std::string_view bytes, const std::string& source) {
  io::Reader r(bytes, source);
  r.expect_magic(kCheckpointMagic);
  r.expect_version(kCheckpointVersion);
  const auto blocks = r.u32();
  std::map<std::string, Eigen::MatrixXd> found;
  for (std::uint32_t b = 0; b < blocks; ++b) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank == 0 || rank > 2) r.fail("unsupported tensor rank " + std::to_string(rank));
    const auto rows = r.u32();
    const auto cols = rank == 2 ? r.u32() : 1u;
    if (r.remaining() / 4 < std::size_t{rows} * cols) r.fail("truncated block " + name);
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
    found[name] = std::move(m);
  }
  Checkpoint ck;
  ck.params.for_each([&](const std::string& name, Eigen::MatrixXd& m) {
    const auto it = found.find(name);
    if (it == found.end()) throw InputError(source + ": checkpoint lacks block " + name);
    m = it->second;
  });
  const auto& p = ck.params;
  const bool consistent =
      p.encoder.w1.cols() == kEncoderInputDim && p.encoder.b1.rows() == p.encoder.w1.rows() &&
      p.encoder.w2.cols() == p.encoder.w1.rows() && p.encoder.b2.rows() == p.encoder.w2.rows() &&
      p.adapter.w1.cols() == p.encoder.w2.rows() && p.adapter.b1.rows() == p.adapter.w1.rows() &&
      p.adapter.gain.rows() == p.adapter.w1.rows() && p.adapter.shift.rows() == p.adapter.w1.rows() &&
      p.adapter.w2.cols() == p.adapter.w1.rows() && p.adapter.b2.rows() == p.adapter.w2.rows() &&
      p.adapter.log_temperature.size() == 1 && p.binary.w.cols() == p.encoder.w2.rows() &&
      p.binary.b.size() == 1;
  if (!consistent) throw InputError(source + ": checkpoint tensor shapes are inconsistent");
  const auto meta = r.u32();
  for (std::uint32_t k = 0; k < meta; ++k) {
    std::string key = r.str();
    ck.meta[key] = r.str();
  }
  if (!r.done()) r.fail("trailing bytes");
  if (!ck.params.all_finite()) throw NumericError(source + ": checkpoint has non-finite values");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  io::write_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = io::read_file(path);
  return checkpoint_from_bytes(bytes, path);
}

}  // namespace pla
