#include "rnmt/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "rnmt/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

namespace rnmt {

EncoderVariant parse_encoder_variant(const std::string& name) {
  if (name == "base2") return EncoderVariant::kBase2;
  if (name == "rl3") return EncoderVariant::kRl3;
  if (name == "rpl3") return EncoderVariant::kRpl3;
  if (name == "ri2") return EncoderVariant::kRi2;
  throw DataError("unknown encoder variant '" + name + "' (valid: base2, rl3, rpl3, ri2)");
}

std::string encoder_variant_name(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::kBase2: return "base2";
    case EncoderVariant::kRl3: return "rl3";
    case EncoderVariant::kRpl3: return "rpl3";
    case EncoderVariant::kRi2: return "ri2";
  }
  return "?";
}

void HyperParams::validate() const {
  if (d_emb < 1 || d_h < 1 || d_a < 1) throw DataError("model widths must be >= 1");
  if (src_vocab < 4 || tgt_vocab < 4) throw DataError("vocab sizes must cover the reserved ids");
  if (max_decode_len < 1) throw DataError("max decode length must be >= 1");
}

GruParams::GruParams(int input, int hidden)
    : wz(MatrixXd::Zero(hidden, input)), uz(MatrixXd::Zero(hidden, hidden)),
      bz(MatrixXd::Zero(hidden, 1)),
      wr(MatrixXd::Zero(hidden, input)), ur(MatrixXd::Zero(hidden, hidden)),
      br(MatrixXd::Zero(hidden, 1)),
      wc(MatrixXd::Zero(hidden, input)), uc(MatrixXd::Zero(hidden, hidden)),
      bc(MatrixXd::Zero(hidden, 1)) {}

ModelParams::ModelParams(const HyperParams& hp) {
  hp.validate();
  const int d = hp.d_h;
  const int enc_out = hp.encoder_width();
  src_embed = MatrixXd::Zero(hp.d_emb, hp.src_vocab);
  tgt_embed = MatrixXd::Zero(hp.d_emb, hp.tgt_vocab);
  enc_fwd = GruParams(hp.d_emb, d);
  enc_bwd = GruParams(hp.d_emb, d);
  enc_third = GruParams(hp.d_emb, d);
  dec = GruParams(hp.d_emb + enc_out, d);
  att_ws = MatrixXd::Zero(hp.d_a, d);
  att_wh = MatrixXd::Zero(hp.d_a, enc_out);
  att_v = MatrixXd::Zero(hp.d_a, 1);
  init_w = MatrixXd::Zero(d, enc_out);
  init_b = MatrixXd::Zero(d, 1);
  read_w = MatrixXd::Zero(d, hp.d_emb + d + enc_out);
  read_b = MatrixXd::Zero(d, 1);
  out_w = MatrixXd::Zero(hp.tgt_vocab, d);
  out_b = MatrixXd::Zero(hp.tgt_vocab, 1);
}

void ModelParams::init_uniform(Rng& rng, double scale) {
  visit([&](const std::string&, MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-scale, scale);
  });
}

void ModelParams::set_zero() {
  visit([](const std::string&, MatrixXd& m) { m.setZero(); });
}

void ModelParams::add(const ModelParams& other) { add_scaled(1.0, other); }

void ModelParams::add_scaled(double alpha, const ModelParams& other) {
  std::vector<const MatrixXd*> theirs;
  other.visit([&](const std::string&, const MatrixXd& m) { theirs.push_back(&m); });
  std::size_t k = 0;
  visit([&](const std::string&, MatrixXd& m) { m += alpha * *theirs[k++]; });
}

double ModelParams::squared_norm() const {
  double sum = 0.0;
  visit([&](const std::string&, const MatrixXd& m) { sum += m.squaredNorm(); });
  return sum;
}

namespace {

constexpr char kMagic[4] = {'R', 'N', 'M', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw ModelIoError("truncated model file while reading " + what);
  return v;
}
std::uint64_t get_u64(std::istream& in, const std::string& what) {
  std::uint64_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw ModelIoError("truncated model file while reading " + what);
  return v;
}
std::int32_t get_i32(std::istream& in, const std::string& what) {
  std::int32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw ModelIoError("truncated model file while reading " + what);
  return v;
}
std::string get_string(std::istream& in, const std::string& what) {
  std::uint32_t len = get_u32(in, what);
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len)))
    throw ModelIoError("truncated model file while reading " + what);
  return s;
}

void put_vocab(std::ostream& out, const Vocabulary& v) {
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  for (const auto& tok : v.tokens()) put_string(out, tok);
}

Vocabulary get_vocab(std::istream& in, const std::string& what) {
  std::uint64_t count = get_u64(in, what);
  std::vector<std::string> toks;
  toks.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) toks.push_back(get_string(in, what));
  return Vocabulary::from_tokens(toks);
}

void put_tensor(std::ostream& out, const std::string& name, const MatrixXd& m) {
  put_string(out, name);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open model file for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_i32(out, model.hp.d_emb);
  put_i32(out, model.hp.d_h);
  put_i32(out, model.hp.d_a);
  put_u32(out, static_cast<std::uint32_t>(model.hp.variant));
  put_i32(out, model.hp.src_vocab);
  put_i32(out, model.hp.tgt_vocab);
  put_i32(out, model.hp.max_decode_len);
  put_u32(out, model.hp.reordered_by_word ? 1 : 0);
  put_vocab(out, model.src_vocab);
  put_vocab(out, model.tgt_vocab);

  std::uint32_t count = 0;
  model.params.visit([&](const std::string&, const MatrixXd&) { ++count; });
  put_u32(out, count);
  model.params.visit([&](const std::string& name, const MatrixXd& m) {
    put_tensor(out, name, m);
  });
  if (!out) throw DataError("write failed for model file: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ModelIoError("bad magic: '" + path + "' is not a model file");
  std::uint32_t version = get_u32(in, "format version");
  if (version != kFormatVersion)
    throw ModelIoError("unsupported model format version " + std::to_string(version));

  Model model;
  model.hp.d_emb = get_i32(in, "d_emb");
  model.hp.d_h = get_i32(in, "d_h");
  model.hp.d_a = get_i32(in, "d_a");
  std::uint32_t variant = get_u32(in, "encoder variant");
  if (variant > 3) throw ModelIoError("invalid encoder variant tag " + std::to_string(variant));
  model.hp.variant = static_cast<EncoderVariant>(variant);
  model.hp.src_vocab = get_i32(in, "src_vocab");
  model.hp.tgt_vocab = get_i32(in, "tgt_vocab");
  model.hp.max_decode_len = get_i32(in, "max_decode_len");
  model.hp.reordered_by_word = get_u32(in, "reordered_by_word") != 0;
  model.hp.validate();
  model.src_vocab = get_vocab(in, "source vocabulary");
  model.tgt_vocab = get_vocab(in, "target vocabulary");
  if (model.src_vocab.size() != model.hp.src_vocab ||
      model.tgt_vocab.size() != model.hp.tgt_vocab)
    throw ModelIoError("vocabulary sizes disagree with the header");

  model.params = ModelParams(model.hp);
  std::map<std::string, MatrixXd*> by_name;
  model.params.visit([&](const std::string& name, MatrixXd& m) { by_name[name] = &m; });

  std::uint32_t count = get_u32(in, "tensor count");
  if (count != by_name.size())
    throw ModelIoError("tensor count " + std::to_string(count) + " does not match expected " +
                       std::to_string(by_name.size()));
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = get_string(in, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ModelIoError("unknown tensor '" + name + "'");
    MatrixXd& m = *it->second;
    std::uint64_t rows = get_u64(in, "rows of '" + name + "'");
    std::uint64_t cols = get_u64(in, "cols of '" + name + "'");
    if (rows != static_cast<std::uint64_t>(m.rows()) ||
        cols != static_cast<std::uint64_t>(m.cols()))
      throw ModelIoError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", expected " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()));
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j) {
        double v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
          throw ModelIoError("truncated tensor '" + name + "'");
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
  }
  return model;
}

}  // namespace rnmt
