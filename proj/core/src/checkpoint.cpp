#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "dgrlab/train.hpp"

namespace dgrlab::train {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'R', '1'};
constexpr std::uint32_t kMaxNameLength = 1u << 16;
constexpr std::uint32_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t length, const char* what) {
    need(length, what);
    std::string s = bytes_.substr(pos_, length);
    pos_ += length;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_fingerprint(const std::string& fp) {
  std::map<std::string, std::string> out;
  std::istringstream in(fp);
  std::string item;
  while (std::getline(in, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

void assign(ad::Tensor& target, const CheckpointRecord& record) {
  if (target.shape() != record.shape) {
    throw CheckpointError("parameter '" + record.name + "' has shape " + ad::to_string(record.shape) +
                          " in checkpoint but " + ad::to_string(target.shape()) + " in model");
  }
  auto dst = target.mutable_data();
  std::copy(record.values.begin(), record.values.end(), dst.begin());
}

}  // namespace

std::optional<std::string> fingerprint_mismatch(const std::string& expected, const std::string& actual,
                                                bool ignore_regressor) {
  const auto e = parse_fingerprint(expected);
  const auto a = parse_fingerprint(actual);
  auto skip = [&](const std::string& key) { return ignore_regressor && key.rfind("head_", 0) == 0; };
  for (const auto& [key, value] : e) {
    if (skip(key)) continue;
    auto it = a.find(key);
    const std::string found = it == a.end() ? "<missing>" : it->second;
    if (found != value) return key + " (config " + value + ", checkpoint " + found + ")";
  }
  for (const auto& [key, value] : a) {
    if (!skip(key) && !e.contains(key)) return key + " (config <missing>, checkpoint " + value + ")";
  }
  return std::nullopt;
}

void save_checkpoint(const DgrModel& model, const TrainConfig& config, const std::string& path) {
  std::string out(kMagic, sizeof(kMagic));
  const auto fp = config.fingerprint();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fp.size()));
  out += fp;
  for (const auto& [name, tensor] : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : tensor.data()) put<double>(out, v);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot open " + path + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError("cannot open checkpoint " + path);
  Reader in(std::string(std::istreambuf_iterator<char>(file), {}));

  const auto magic = in.get_string(4, "magic");
  if (magic.substr(0, 3) != "DGR") throw CheckpointError(path + " is not a checkpoint file");
  if (magic != std::string(kMagic, 4)) throw CheckpointError("unsupported checkpoint version '" + magic + "'");

  Checkpoint ckpt;
  const auto fp_len = in.get<std::uint32_t>("fingerprint length");
  ckpt.fingerprint = in.get_string(fp_len, "fingerprint");
  while (!in.done()) {
    CheckpointRecord rec;
    const auto name_len = in.get<std::uint32_t>("name length");
    if (name_len == 0 || name_len > kMaxNameLength) throw CheckpointError("corrupt parameter name length");
    rec.name = in.get_string(name_len, "parameter name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank == 0 || rank > kMaxRank) throw CheckpointError("corrupt rank for parameter '" + rec.name + "'");
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint64_t>("dimension");
      if (d == 0 || d > (1u << 30)) throw CheckpointError("corrupt dimension for parameter '" + rec.name + "'");
      rec.shape.push_back(static_cast<std::size_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    rec.values.resize(count);
    for (auto& v : rec.values) v = in.get<double>("parameter values");
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

DgrModel load_checkpoint(const std::string& path, const TrainConfig& config) {
  const auto ckpt = read_checkpoint(path);
  if (auto diff = fingerprint_mismatch(config.fingerprint(), ckpt.fingerprint, false)) {
    throw CheckpointError("checkpoint does not match config: " + *diff);
  }
  auto model = DgrModel::create(config);
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : ckpt.records) by_name[r.name] = &r;
  auto params = model.parameters();
  for (auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
    assign(tensor, *it->second);
  }
  if (by_name.size() != params.size()) throw CheckpointError("checkpoint has parameters the model does not");
  return model;
}

void load_pretrained(DgrModel& model, const Checkpoint& checkpoint, const TrainConfig& config) {
  if (auto diff = fingerprint_mismatch(config.fingerprint(), checkpoint.fingerprint, true)) {
    throw CheckpointError("checkpoint does not match config: " + *diff);
  }
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : checkpoint.records) by_name[r.name] = &r;
  // Validate everything before touching the model.
  auto params = model.pretrain_parameters();
  for (auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
    if (it->second->shape != tensor.shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + ad::to_string(it->second->shape) +
                            " in checkpoint but " + ad::to_string(tensor.shape()) + " in model");
    }
  }
  for (auto& [name, tensor] : params) assign(tensor, *by_name.at(name));
}

}  // namespace dgrlab::train
