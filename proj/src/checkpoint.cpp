#include "innlat/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "innlat/errors.hpp"
#include "innlat/io.hpp"

namespace innlat {

using nlohmann::json;

namespace {

std::string reals(const Vector& v) {
  return format_reals(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

std::string rows(const Matrix& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ',';
    out += reals(m.row(i).transpose());
  }
  return out + "]";
}

const json& field(const json& j, const char* name, const std::string& path) {
  if (!j.is_object() || !j.contains(name)) throw IoError("checkpoint: missing field " + path + "." + name);
  return j[name];
}

Vector read_vector(const json& j, const std::string& path, Eigen::Index expect) {
  if (!j.is_array()) throw IoError("checkpoint: field " + path + " is not an array");
  if (static_cast<Eigen::Index>(j.size()) != expect) {
    throw IoError("checkpoint: field " + path + " has " + std::to_string(j.size()) + " entries, expected " + std::to_string(expect));
  }
  Vector v(expect);
  for (Eigen::Index i = 0; i < expect; ++i) {
    if (!j[i].is_number()) throw IoError("checkpoint: field " + path + "[" + std::to_string(i) + "] is not a number");
    v(i) = j[i].get<double>();
  }
  if (!v.allFinite()) throw IoError("checkpoint: field " + path + " has non-finite entries");
  return v;
}

Matrix read_matrix(const json& j, const std::string& path, Eigen::Index r, Eigen::Index c) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != r) {
    throw IoError("checkpoint: field " + path + " must have " + std::to_string(r) + " rows");
  }
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) = read_vector(j[i], path + "[" + std::to_string(i) + "]", c).transpose();
  return m;
}

}  // namespace

std::string checkpoint_to_string(const FlowModel& model) {
  std::string out = "{\"version\":" + std::to_string(kCheckpointVersion) + ",\"dim\":" + std::to_string(model.dim()) + ",\"blocks\":[";
  for (int b = 0; b < model.block_count(); ++b) {
    const auto& blk = model.blocks()[b];
    if (b) out += ",\n";
    else out += "\n";
    out += "{\"actnorm\":{\"log_scale\":" + reals(blk.actnorm.log_scale()) + ",\"bias\":" + reals(blk.actnorm.bias()) + "}";
    out += ",\"perm\":" + json(blk.perm.perm()).dump();
    const auto& sp = blk.coupling.subnet();
    out += ",\"coupling\":{\"w1\":" + rows(sp.w1) + ",\"b1\":" + reals(sp.b1) + ",\"w2\":" + rows(sp.w2) +
           ",\"b2\":" + reals(sp.b2) + ",\"clamp\":" + format_real(blk.coupling.clamp()) + "}}";
  }
  out += "\n]}\n";
  return out;
}

FlowModel checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("checkpoint: corrupted JSON: ") + e.what());
  }
  const json& ver = field(j, "version", "$");
  if (!ver.is_number_integer() || ver.get<int>() != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + ver.dump() + " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const json& dim_j = field(j, "dim", "$");
  if (!dim_j.is_number_integer()) throw IoError("checkpoint: field $.dim is not an integer");
  const int d = dim_j.get<int>();
  if (d < 2 || d % 2 != 0) throw IoError("checkpoint: field $.dim must be even and >= 2");
  const json& blocks_j = field(j, "blocks", "$");
  if (!blocks_j.is_array() || blocks_j.empty()) throw IoError("checkpoint: field $.blocks must be a non-empty array");

  std::vector<FlowBlock> blocks;
  try {
    for (std::size_t b = 0; b < blocks_j.size(); ++b) {
      const std::string bp = "$.blocks[" + std::to_string(b) + "]";
      const json& bj = blocks_j[b];
      const json& an = field(bj, "actnorm", bp);
      ActNormLayer actnorm(read_vector(field(an, "log_scale", bp + ".actnorm"), bp + ".actnorm.log_scale", d),
                           read_vector(field(an, "bias", bp + ".actnorm"), bp + ".actnorm.bias", d));
      const json& pj = field(bj, "perm", bp);
      if (!pj.is_array() || static_cast<int>(pj.size()) != d) throw IoError("checkpoint: field " + bp + ".perm must have " + std::to_string(d) + " entries");
      std::vector<int> perm;
      for (const auto& e : pj) {
        if (!e.is_number_integer()) throw IoError("checkpoint: field " + bp + ".perm has a non-integer entry");
        perm.push_back(e.get<int>());
      }
      const json& cj = field(bj, "coupling", bp);
      const std::string cp = bp + ".coupling";
      const json& b1j = field(cj, "b1", cp);
      if (!b1j.is_array()) throw IoError("checkpoint: field " + cp + ".b1 is not an array");
      const auto h = static_cast<Eigen::Index>(b1j.size());
      SubnetParams sp;
      sp.w1 = read_matrix(field(cj, "w1", cp), cp + ".w1", h, d / 2);
      sp.b1 = read_vector(b1j, cp + ".b1", h);
      sp.w2 = read_matrix(field(cj, "w2", cp), cp + ".w2", d, h);
      sp.b2 = read_vector(field(cj, "b2", cp), cp + ".b2", d);
      const json& clamp = field(cj, "clamp", cp);
      if (!clamp.is_number()) throw IoError("checkpoint: field " + cp + ".clamp is not a number");
      blocks.push_back({std::move(actnorm), PermutationLayer(std::move(perm)), CouplingLayer(std::move(sp), clamp.get<double>())});
    }
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return FlowModel(std::move(blocks));
}

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_string(model));
}

FlowModel load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_string(read_file(path)); }

}  // namespace innlat
