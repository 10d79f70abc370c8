#include "ibu/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ibu::protocol {

namespace {

constexpr std::uint8_t kKindCheckpoint = 1;
constexpr std::uint8_t kKindRequest = 2;

// ---- byte building -------------------------------------------------------

void put_u8(std::string& b, std::uint8_t v) { b.push_back(static_cast<char>(v)); }

void put_u16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& b, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) b.push_back(static_cast<char>((v >> s) & 0xff));
}

void put_f32(std::string& b, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(b, bits);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Header keys are emitted in a fixed order so identical contents give
// identical bytes.
using HeaderItems = std::vector<std::pair<std::string, std::string>>;

void put_header(std::string& b, const HeaderItems& items) {
    std::string text;
    for (const auto& [k, v] : items) text += k + "=" + v + "\n";
    if (text.size() > 0xffffffffu) throw std::runtime_error("header too large");
    put_u32(b, static_cast<std::uint32_t>(text.size()));
    b += text;
}

void put_array_f32(std::string& b, const std::string& name, const Tensor& t) {
    check_finite(t, "array '" + name + "'");
    if (name.size() > 0xffff) throw std::runtime_error("array name too long");
    put_u16(b, static_cast<std::uint16_t>(name.size()));
    b += name;
    if (t.rank() > 0xff) throw std::runtime_error("array rank too large");
    put_u8(b, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) {
        if (d > 0xffffffffu) throw std::runtime_error("array dimension too large");
        put_u32(b, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) put_f32(b, v);
}

void put_array_u32(std::string& b, const std::string& name, const std::vector<std::uint32_t>& v) {
    put_u16(b, static_cast<std::uint16_t>(name.size()));
    b += name;
    put_u8(b, 1);
    put_u32(b, static_cast<std::uint32_t>(v.size()));
    for (std::uint32_t x : v) put_u32(b, x);
}

void write_atomic(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("cannot move '" + tmp + "' into place");
    }
}

// ---- byte reading --------------------------------------------------------

class Reader {
  public:
    explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == buf_.size(); }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(
            static_cast<std::uint8_t>(buf_[pos_]) |
            (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf_[pos_ + 1])) << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32(const char* what) {
        std::uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        return static_cast<double>(f);
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

  private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > buf_.size())
            throw FormatError(std::string("truncated ") + what, pos_);
    }

    std::string buf_;
    std::size_t pos_ = 0;
};

struct RawArray {
    std::string name;
    std::vector<std::size_t> dims;
    Tensor values;                     // filled for f32 arrays
    std::vector<std::uint32_t> words;  // filled for the labels array
};

struct Container {
    std::uint8_t kind = 0;
    std::map<std::string, std::string> header;
    std::size_t header_offset = 0;
    std::map<std::string, RawArray> arrays;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

Container read_container(const std::string& path, std::uint8_t expected_kind) {
    Reader r(read_file(path));
    Container c;

    if (r.bytes(4, "magic") != "BLDU") throw FormatError("bad magic", 0);
    std::size_t at = r.pos();
    if (r.u16("format version") != kFormatVersion)
        throw FormatError("unsupported format version", at);
    at = r.pos();
    c.kind = r.u8("container kind");
    if (c.kind != kKindCheckpoint && c.kind != kKindRequest)
        throw FormatError("unknown container kind", at);
    if (c.kind != expected_kind)
        throw FormatError(expected_kind == kKindCheckpoint
                              ? "container is not a checkpoint"
                              : "container is not an unlearning request",
                          at);

    std::uint32_t hlen = r.u32("header length");
    c.header_offset = r.pos();
    std::istringstream lines(r.bytes(hlen, "header"));
    std::string line;
    while (std::getline(lines, line)) {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw FormatError("malformed header line '" + line + "'", c.header_offset);
        if (!c.header.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
            throw FormatError("duplicate header key '" + line.substr(0, eq) + "'", c.header_offset);
    }

    while (!r.at_end()) {
        std::size_t start = r.pos();
        std::uint16_t nlen = r.u16("array name length");
        RawArray a;
        a.name = r.bytes(nlen, "array name");
        std::uint8_t rank = r.u8("array rank");
        std::size_t count = 1;
        for (std::uint8_t i = 0; i < rank; ++i) {
            a.dims.push_back(r.u32("array dims"));
            count *= a.dims.back();
        }
        if (a.name == "labels") {
            a.words.reserve(count);
            for (std::size_t i = 0; i < count; ++i) a.words.push_back(r.u32("array payload"));
        } else {
            std::vector<double> data;
            data.reserve(count);
            for (std::size_t i = 0; i < count; ++i) data.push_back(r.f32("array payload"));
            a.values = Tensor(a.dims, std::move(data));
        }
        std::string name = a.name;
        if (!c.arrays.emplace(name, std::move(a)).second)
            throw FormatError("duplicate array '" + name + "'", start);
    }
    return c;
}

// ---- header field access -------------------------------------------------

const std::string& field(const Container& c, const std::string& key) {
    auto it = c.header.find(key);
    if (it == c.header.end())
        throw FormatError("header missing key '" + key + "'", c.header_offset);
    return it->second;
}

double field_double(const Container& c, const std::string& key) {
    const std::string& s = field(c, key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw FormatError("header key '" + key + "' is not a number", c.header_offset);
    return v;
}

std::uint64_t field_u64(const Container& c, const std::string& key, int base) {
    const std::string& s = field(c, key);
    char* end = nullptr;
    std::uint64_t v = std::strtoull(s.c_str(), &end, base);
    if (end != s.c_str() + s.size() || s.empty())
        throw FormatError("header key '" + key + "' is not an integer", c.header_offset);
    return v;
}

const RawArray& array(const Container& c, const std::string& name) {
    auto it = c.arrays.find(name);
    if (it == c.arrays.end())
        throw FormatError("missing array '" + name + "'", c.header_offset);
    return it->second;
}

// Parameter names look like W0/b0/...; widths are recovered from the weight
// dims so the file needs no separate architecture block.
nn::Mlp assemble_mlp(const Container& c, const std::string& prefix) {
    std::map<std::size_t, const RawArray*> weights;
    ParamSet params;
    for (const auto& [name, a] : c.arrays) {
        if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) continue;
        std::string base = name.substr(prefix.size());
        if (base.size() < 2 || (base[0] != 'W' && base[0] != 'b'))
            throw FormatError("unexpected parameter array '" + name + "'", c.header_offset);
        char* end = nullptr;
        std::size_t layer = std::strtoul(base.c_str() + 1, &end, 10);
        if (end != base.c_str() + base.size())
            throw FormatError("unexpected parameter array '" + name + "'", c.header_offset);
        if (base[0] == 'W') {
            if (a.values.rank() != 2)
                throw FormatError("weight array '" + name + "' is not rank 2", c.header_offset);
            weights[layer] = &a;
        }
        params.emplace(base, a.values);
    }
    if (weights.empty()) throw FormatError("no parameter arrays with prefix '" + prefix + "'",
                                           c.header_offset);

    nn::MlpSpec spec;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        auto it = weights.find(l);
        if (it == weights.end())
            throw FormatError("parameter arrays skip layer " + std::to_string(l), c.header_offset);
        if (l == 0) spec.widths.push_back(it->second->dims[0]);
        spec.widths.push_back(it->second->dims[1]);
        if (!params.count("b" + std::to_string(l)))
            throw FormatError("missing bias array for layer " + std::to_string(l), c.header_offset);
    }
    if (params.size() != 2 * weights.size())
        throw FormatError("stray parameter arrays with prefix '" + prefix + "'", c.header_offset);
    return {std::move(spec), std::move(params)};
}

HeaderItems common_header(std::uint8_t kind, double beta, std::size_t latent_dim,
                          std::size_t n_features) {
    return {{"version", std::to_string(kFormatVersion)},
            {"kind", kind == kKindCheckpoint ? "checkpoint" : "request"},
            {"beta", fmt_double(beta)},
            {"latent_dim", std::to_string(latent_dim)},
            {"n_features", std::to_string(n_features)}};
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

FormatError::FormatError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

CompressorCheckpoint strip_to_compressor(const vib::VibModel& model, std::uint64_t seed) {
    return {model.compressor.spec.widths, model.latent_dim, model.beta, seed,
            model.compressor.params};
}

vib::GaussianCode encode(const CompressorCheckpoint& cp, const Tensor& inputs) {
    vib::VibModel shell;
    shell.compressor = {nn::MlpSpec{cp.widths}, cp.params};
    shell.latent_dim = cp.latent_dim;
    shell.beta = cp.beta;
    return vib::encode(shell, inputs);
}

std::uint64_t checkpoint_hash(const ParamSet& compressor_params) {
    // FNV-1a over the bytes as they appear in the file, so a full-precision
    // in-memory model and its 32-bit round trip hash identically.
    std::string bytes;
    for (const auto& [name, t] : compressor_params)
        for (double v : t.data) put_f32(bytes, v);
    std::uint64_t h = 14695981039346656037ull;
    for (char ch : bytes) {
        h ^= static_cast<std::uint8_t>(ch);
        h *= 1099511628211ull;
    }
    return h;
}

void save_compressor(const std::string& path, const CompressorCheckpoint& cp) {
    if (cp.widths.size() < 2) throw std::runtime_error("checkpoint widths are incomplete");
    if (cp.widths.back() != 2 * cp.latent_dim)
        throw std::runtime_error("compressor output width is not twice the latent dim");
    std::string b = "BLDU";
    put_u16(b, kFormatVersion);
    put_u8(b, kKindCheckpoint);
    HeaderItems h = common_header(kKindCheckpoint, cp.beta, cp.latent_dim, cp.widths.front());
    h.emplace_back("seed", std::to_string(cp.seed));
    put_header(b, h);
    for (const auto& [name, t] : cp.params) put_array_f32(b, name, t);
    write_atomic(path, b);
}

CompressorCheckpoint load_compressor(const std::string& path) {
    Container c = read_container(path, kKindCheckpoint);
    nn::Mlp net = assemble_mlp(c, "");
    CompressorCheckpoint cp{std::move(net.spec.widths),
                            static_cast<std::size_t>(field_u64(c, "latent_dim", 10)),
                            field_double(c, "beta"), field_u64(c, "seed", 10),
                            std::move(net.params)};
    if (cp.widths.front() != field_u64(c, "n_features", 10))
        throw FormatError("n_features disagrees with the weight dims", c.header_offset);
    if (cp.widths.back() != 2 * cp.latent_dim)
        throw FormatError("compressor output width is not twice the latent dim", c.header_offset);
    return cp;
}

void save_model(const std::string& path, const vib::VibModel& model, std::uint64_t seed) {
    std::string b = "BLDU";
    put_u16(b, kFormatVersion);
    put_u8(b, kKindCheckpoint);
    HeaderItems h = common_header(kKindCheckpoint, model.beta, model.latent_dim,
                                  model.n_features());
    h.emplace_back("seed", std::to_string(seed));
    put_header(b, h);
    for (const auto& [name, t] : model.compressor.params) put_array_f32(b, "c." + name, t);
    for (const auto& [name, t] : model.approximator.params) put_array_f32(b, "a." + name, t);
    write_atomic(path, b);
}

vib::VibModel load_model(const std::string& path) {
    Container c = read_container(path, kKindCheckpoint);
    vib::VibModel model;
    model.compressor = assemble_mlp(c, "c.");
    model.approximator = assemble_mlp(c, "a.");
    model.beta = field_double(c, "beta");
    model.latent_dim = static_cast<std::size_t>(field_u64(c, "latent_dim", 10));
    if (model.compressor.spec.n_out() != 2 * model.latent_dim)
        throw FormatError("compressor output width is not twice the latent dim", c.header_offset);
    if (model.compressor.spec.n_in() != field_u64(c, "n_features", 10))
        throw FormatError("n_features disagrees with the weight dims", c.header_offset);
    if (model.approximator.spec.n_in() != model.latent_dim)
        throw FormatError("approximator input width is not the latent dim", c.header_offset);
    return model;
}

CodeMode parse_code_mode(const std::string& name) {
    if (name == "mean-code") return CodeMode::mean_code;
    if (name == "sampled") return CodeMode::sampled;
    throw std::runtime_error("unknown code mode '" + name + "' (expected mean-code or sampled)");
}

std::string code_mode_name(CodeMode mode) {
    return mode == CodeMode::mean_code ? "mean-code" : "sampled";
}

UnlearningRequest prepare_request(const CompressorCheckpoint& cp, const Tensor& erased_inputs,
                                  const std::vector<std::uint32_t>& erased_labels,
                                  const masking::MaskSpec& spec, CodeMode mode, Rng& rng) {
    masking::validate(spec);
    if (erased_inputs.rank() != 2) throw std::runtime_error("erased inputs must be rank 2");
    if (erased_inputs.rows() == 0) throw std::runtime_error("erased set is empty");
    if (erased_inputs.cols() != cp.widths.front())
        throw std::runtime_error("erased inputs do not match the compressor input width");
    if (spec.n != erased_inputs.cols())
        throw std::runtime_error("mask spec feature count does not match the erased inputs");
    if (erased_labels.size() != erased_inputs.rows())
        throw std::runtime_error("label count does not match the erased inputs");

    Tensor masked = masking::masked_values(masking::mask_batch(erased_inputs, spec, rng));
    vib::GaussianCode code = encode(cp, masked);
    UnlearningRequest req;
    req.z_e = mode == CodeMode::mean_code ? std::move(code.mean) : vib::sample_code(code, rng);
    req.y_e = erased_labels;
    req.dp = masking::account(spec);
    req.sr = spec.sr;
    req.beta_used = cp.beta;
    req.checkpoint_hash = checkpoint_hash(cp.params);
    return req;
}

void save_request(const std::string& path, const UnlearningRequest& req) {
    if (req.z_e.rank() != 2) throw std::runtime_error("request codes must be rank 2");
    std::string b = "BLDU";
    put_u16(b, kFormatVersion);
    put_u8(b, kKindRequest);
    HeaderItems h = common_header(kKindRequest, req.beta_used, req.z_e.cols(), req.dp.n);
    h.emplace_back("strategy", masking::strategy_name(req.dp.strategy));
    h.emplace_back("sr", fmt_double(req.sr));
    h.emplace_back("epsilon", fmt_double(req.dp.epsilon));
    h.emplace_back("delta", fmt_double(req.dp.delta));
    h.emplace_back("checkpoint_hash", hash_hex(req.checkpoint_hash));
    put_header(b, h);
    put_array_u32(b, "labels", req.y_e);
    put_array_f32(b, "z_e", req.z_e);
    write_atomic(path, b);
}

UnlearningRequest load_request(const std::string& path) {
    Container c = read_container(path, kKindRequest);
    const RawArray& z = array(c, "z_e");
    if (z.values.rank() != 2) throw FormatError("array 'z_e' is not rank 2", c.header_offset);
    const RawArray& labels = array(c, "labels");
    if (labels.dims.size() != 1)
        throw FormatError("array 'labels' is not rank 1", c.header_offset);

    UnlearningRequest req;
    req.z_e = z.values;
    req.y_e = labels.words;
    req.sr = field_double(c, "sr");
    req.beta_used = field_double(c, "beta");
    req.checkpoint_hash = field_u64(c, "checkpoint_hash", 16);
    req.dp.n = static_cast<std::size_t>(field_u64(c, "n_features", 10));
    req.dp.strategy = masking::parse_strategy(field(c, "strategy"));
    req.dp.epsilon = field_double(c, "epsilon");
    req.dp.delta = field_double(c, "delta");
    // k is never stored; it re-derives from (sr, n) like the client computed it.
    masking::MaskSpec spec{req.dp.n, req.sr, req.dp.strategy, 0.0};
    masking::validate(spec);
    req.dp.k = masking::derived_k(spec);
    if (req.z_e.cols() != field_u64(c, "latent_dim", 10))
        throw FormatError("latent_dim disagrees with the code dims", c.header_offset);
    return req;
}

Validation validate_request(const UnlearningRequest& req, const vib::VibModel& server_model) {
    if (req.checkpoint_hash != checkpoint_hash(server_model.compressor.params))
        return {false, "checkpoint mismatch"};
    if (req.z_e.rank() != 2 || req.z_e.cols() != server_model.latent_dim)
        return {false, "latent dimension mismatch"};
    if (req.z_e.rows() == 0 || req.y_e.size() != req.z_e.rows())
        return {false, "label count mismatch"};
    for (double v : req.z_e.data)
        if (!std::isfinite(v)) return {false, "codes are not finite"};
    for (std::uint32_t y : req.y_e)
        if (y >= server_model.num_classes()) return {false, "label out of range"};

    if (req.dp.n != server_model.n_features()) return {false, "dp metadata inconsistent"};
    try {
        masking::MaskSpec spec{req.dp.n, req.sr, req.dp.strategy, 0.0};
        masking::validate(spec);
        if (masking::derived_k(spec) != req.dp.k) return {false, "dp metadata inconsistent"};
        masking::DpAccount fresh = masking::account_for_k(req.dp.n, req.dp.k, req.dp.strategy);
        if (std::abs(fresh.epsilon - req.dp.epsilon) > 1e-9 ||
            std::abs(fresh.delta - req.dp.delta) > 1e-9)
            return {false, "dp metadata inconsistent"};
    } catch (const std::exception&) {
        return {false, "dp metadata inconsistent"};
    }
    return {true, ""};
}

}  // namespace ibu::protocol
