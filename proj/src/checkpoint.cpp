// Binary checkpoint layout (all integers little-endian):
//
//   "CAREPRED"               8-byte magic
//   u32  format_version
//   u64  header length, then the header as JSON text
//   u32  array count
//   per array: u16 name length, name, u32 rows, u32 cols,
//              rows*cols IEEE-754 binary64 values in row-major order
//   32-byte SHA-256 of every preceding byte
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "carepred/errors.hpp"
#include "carepred/hash.hpp"
#include "carepred/train.hpp"
#include "json.hpp"

namespace carepred {

namespace {

using nlohmann::ordered_json;

constexpr std::string_view kMagic = "CAREPRED";

template <class UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t b = 0; b < sizeof(UInt); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class UInt>
  UInt get_le() {
    const auto raw = take(sizeof(UInt));
    UInt value = 0;
    for (std::size_t b = 0; b < sizeof(UInt); ++b) {
      value |= static_cast<UInt>(static_cast<unsigned char>(raw[b])) << (8 * b);
    }
    return value;
  }

  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw IntegrityError("checkpoint truncated");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

ordered_json model_config_json(const ModelConfig& c) {
  ordered_json j;
  j["backbone"] = std::string(to_string(c.backbone));
  j["input_dim"] = c.input_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["head_dim"] = c.head_dim;
  j["output_dim"] = c.output_dim;
  j["dropout_rate"] = c.dropout_rate;
  j["normalize_tokens"] = c.normalize_tokens;
  return j;
}

ModelConfig model_config_from(const ordered_json& j) {
  ModelConfig c;
  c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.input_dim = j.at("input_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.head_dim = j.at("head_dim").get<int>();
  c.output_dim = j.at("output_dim").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.normalize_tokens = j.at("normalize_tokens").get<bool>();
  return c;
}

ordered_json train_config_json(const TrainConfig& t) {
  ordered_json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["eps"] = t.eps;
  j["weight_decay"] = t.weight_decay;
  j["threshold"] = t.threshold;
  j["seed"] = t.seed;
  j["max_seq_len"] = t.max_seq_len;
  return j;
}

TrainConfig train_config_from(const ordered_json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.batch_size = j.at("batch_size").get<int>();
  t.epochs = j.at("epochs").get<int>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.eps = j.at("eps").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.threshold = j.at("threshold").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.max_seq_len = j.at("max_seq_len").get<int>();
  return t;
}

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& cp) {
  cp.params.check_shapes(cp.config);

  ordered_json header;
  header["model_config"] = model_config_json(cp.config);
  header["train_config"] = train_config_json(cp.train_config);
  header["stage"] = cp.stage == Stage::pretrained ? "pretrained" : "finetuned";
  header["finetune_user"] =
      cp.finetune_user ? ordered_json(*cp.finetune_user) : ordered_json(nullptr);
  header["parent_fingerprint"] =
      cp.parent_fingerprint ? ordered_json(*cp.parent_fingerprint) : ordered_json(nullptr);
  header["epochs_completed"] = cp.epochs_completed;
  header["optimizer_steps"] = cp.optimizer_steps;
  header["optimizer_init"] = cp.optimizer_init;
  header["training_samples"] = cp.training_samples;
  // raw bit patterns keep the losses exact
  auto losses = ordered_json::array();
  for (double l : cp.epoch_losses) losses.push_back(std::bit_cast<std::uint64_t>(l));
  header["epoch_loss_bits"] = std::move(losses);
  const std::string header_text = header.dump();

  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cp.format_version));
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;

  std::uint32_t count = 0;
  cp.params.for_each_array([&](const std::string&, const auto&) { ++count; });
  put_le<std::uint32_t>(out, count);
  cp.params.for_each_array([&](const std::string& name, const auto& a) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.cols()));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(a(r, c)));
      }
    }
  });

  const auto digest = sha256(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

ModelCheckpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) throw IntegrityError("not a checkpoint (bad magic)");
  const auto version = in.get_le<std::uint32_t>();
  if (version != static_cast<std::uint32_t>(ModelCheckpoint::kFormatVersion)) {
    throw FormatVersionError("unsupported checkpoint format version " + std::to_string(version) +
                             " (this build reads version " +
                             std::to_string(ModelCheckpoint::kFormatVersion) + ")");
  }
  Sha256Digest stored{};
  if (bytes.size() < kMagic.size() + 4 + stored.size()) throw IntegrityError("checkpoint truncated");
  const auto body = bytes.substr(0, bytes.size() - stored.size());
  std::memcpy(stored.data(), bytes.data() + body.size(), stored.size());
  if (sha256(body) != stored) throw IntegrityError("checkpoint checksum mismatch");

  Reader r(body);
  r.take(kMagic.size() + 4);
  ModelCheckpoint cp;
  cp.format_version = static_cast<int>(version);
  try {
    const auto header_len = r.get_le<std::uint64_t>();
    const auto header = ordered_json::parse(r.take(header_len));
    cp.config = model_config_from(header.at("model_config"));
    cp.config.validate();
    cp.train_config = train_config_from(header.at("train_config"));
    cp.stage = header.at("stage").get<std::string>() == "finetuned" ? Stage::finetuned
                                                                      : Stage::pretrained;
    if (!header.at("finetune_user").is_null()) cp.finetune_user = header["finetune_user"].get<UserId>();
    if (!header.at("parent_fingerprint").is_null()) {
      cp.parent_fingerprint = header["parent_fingerprint"].get<std::string>();
    }
    cp.epochs_completed = header.at("epochs_completed").get<int>();
    cp.optimizer_steps = header.at("optimizer_steps").get<std::int64_t>();
    cp.optimizer_init = header.at("optimizer_init").get<std::string>();
    cp.training_samples = header.at("training_samples").get<std::int64_t>();
    for (const auto& bits : header.at("epoch_loss_bits")) {
      cp.epoch_losses.push_back(std::bit_cast<double>(bits.get<std::uint64_t>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint header: ") + e.what());
  }

  cp.params = ModelParams::zeros(cp.config);
  const auto count = r.get_le<std::uint32_t>();
  std::uint32_t expected = 0;
  cp.params.for_each_array([&](const std::string&, const auto&) { ++expected; });
  if (count != expected) throw IntegrityError("checkpoint array count does not match its config");
  cp.params.for_each_array([&](const std::string& name, auto& a) {
    const auto name_len = r.get_le<std::uint16_t>();
    if (r.take(name_len) != name) throw IntegrityError("unexpected array; wanted '" + name + "'");
    const auto rows = r.get_le<std::uint32_t>();
    const auto cols = r.get_le<std::uint32_t>();
    if (static_cast<Eigen::Index>(rows) != a.rows() || static_cast<Eigen::Index>(cols) != a.cols()) {
      throw IntegrityError("array '" + name + "' shape does not match its config");
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = r.get_f64();
    }
  });
  if (r.position() != body.size()) throw IntegrityError("trailing bytes in checkpoint");
  return cp;
}

void save_checkpoint(const ModelCheckpoint& cp, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(cp));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

std::string fingerprint(const ModelCheckpoint& cp) { return sha256_hex(serialize_checkpoint(cp)); }

}  // namespace carepred
