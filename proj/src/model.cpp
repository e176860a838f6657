#include "ldru/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ldru {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

std::string to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::kMlp: return "mlp";
    case OperatorKind::kElemSum: return "elem_sum";
    case OperatorKind::kLinear: return "linear";
    case OperatorKind::kGatedSum: return "gated_sum";
  }
  return "mlp";
}

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "silu"; }

OperatorKind parse_operator_kind(const std::string& s) {
  if (s == "mlp") return OperatorKind::kMlp;
  if (s == "elem_sum") return OperatorKind::kElemSum;
  if (s == "linear") return OperatorKind::kLinear;
  if (s == "gated_sum") return OperatorKind::kGatedSum;
  fail(ErrorCode::kConfig, "unknown operator kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "silu") return Activation::kSilu;
  fail(ErrorCode::kConfig, "unknown activation '" + s + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab", c.vocab},
          {"output_size", c.output_size},
          {"d", c.d},
          {"dropout_p", c.dropout_p},
          {"operator_kind", to_string(c.operator_kind)},
          {"activation", to_string(c.activation)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (!j.is_object()) fail(ErrorCode::kConfig, "model config must be an object");
    c.vocab = j.value("vocab", c.vocab);
    c.output_size = j.value("output_size", c.output_size);
    c.d = j.value("d", c.d);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.operator_kind = parse_operator_kind(j.value("operator_kind", to_string(c.operator_kind)));
    c.activation = parse_activation(j.value("activation", to_string(c.activation)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("model config: ") + e.what());
  }
  return c;
}

std::string checkpoint_bytes(const LdruModel<float>& m) {
  nlohmann::json header;
  header["__metadata__"] = to_json(m.config);
  std::string payload;
  for (const auto* p : m.parameters()) {
    header[p->name] = {{"shape", {p->value.rows(), p->value.cols()}},
                       {"byte_offset", payload.size()}};
    payload.append(reinterpret_cast<const char*>(p->value.data()),
                   static_cast<std::size_t>(p->value.size()) * sizeof(float));
  }
  const std::string text = header.dump() + "\n";
  const std::uint64_t n = text.size();
  std::string out(sizeof n, '\0');
  std::memcpy(out.data(), &n, sizeof n);
  return out + text + payload;
}

LdruModel<float> checkpoint_from_bytes(const std::string& bytes) {
  auto bad = [](std::size_t offset, const std::string& what) {
    fail(ErrorCode::kFormat, "checkpoint: " + what + " at offset " + std::to_string(offset));
  };
  std::uint64_t n = 0;
  if (bytes.size() < sizeof n) bad(0, "truncated header length");
  std::memcpy(&n, bytes.data(), sizeof n);
  if (n == 0 || n > bytes.size() - sizeof n) bad(0, "header length " + std::to_string(n) + " exceeds file");
  const std::string text = bytes.substr(sizeof n, n);
  if (text.back() != '\n') bad(sizeof n + n - 1, "header not newline-terminated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    bad(sizeof n + e.byte - 1, "malformed header JSON");
  }
  const std::size_t base = sizeof n + n;
  const std::size_t payload = bytes.size() - base;
  if (!header.contains("__metadata__")) bad(sizeof n, "missing __metadata__");
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(header["__metadata__"]);
  } catch (const Error& e) {
    bad(sizeof n, e.what());
  }
  LdruModel<float> m = init_model<float>(cfg, 0);
  std::size_t expected = 0;
  for (auto* p : m.parameters()) {
    if (!header.contains(p->name)) bad(sizeof n, "missing tensor '" + p->name + "'");
    const auto& e = header[p->name];
    std::size_t off = 0;
    try {
      const auto shape = e.at("shape").get<std::vector<Index>>();
      off = e.at("byte_offset").get<std::size_t>();
      if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols()) {
        bad(sizeof n, "shape mismatch for '" + p->name + "'");
      }
    } catch (const nlohmann::json::exception&) {
      bad(sizeof n, "bad entry for '" + p->name + "'");
    }
    const std::size_t len = static_cast<std::size_t>(p->value.size()) * sizeof(float);
    if (off > payload || len > payload - off) bad(base + payload, "payload truncated for '" + p->name + "'");
    std::memcpy(p->value.data(), bytes.data() + base + off, len);
    expected += len;
  }
  if (expected != payload) bad(base + expected, "unexpected trailing payload");
  return m;
}

void save_checkpoint(const LdruModel<float>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path);
  const std::string bytes = checkpoint_bytes(m);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorCode::kIo, "write failed for " + path);
}

LdruModel<float> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace ldru
