#include "uld/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "uld/config_io.hpp"
#include "uld/errors.hpp"
#include "uld/rng.hpp"

namespace uld {

void ModelConfig::validate() const {
    if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0) {
        throw ConfigError("input size must be a multiple of 16 in both dimensions, got " +
                          std::to_string(input_h) + "x" + std::to_string(input_w));
    }
    if (num_landmarks < 1) throw ConfigError("num_landmarks must be >= 1");
    for (int c : encoder_channels)
        if (c < 1) throw ConfigError("encoder channels must be positive");
    for (int c : decoder_channels)
        if (c < 1) throw ConfigError("decoder channels must be positive");
    if (msfd_dilations.empty()) throw ConfigError("msfd_dilations must be non-empty");
    for (int d : msfd_dilations)
        if (d < 1) throw ConfigError("dilation rates must be positive");
    if (attention_dim < 1) throw ConfigError("attention_dim must be >= 1");
    if (pooled_h < 1 || pooled_w < 1) throw ConfigError("pooled resolution must be positive");
}

namespace {

int low_dim(const ModelConfig& cfg) { return cfg.encoder_channels[0] + cfg.encoder_channels[1]; }
int high_dim(const ModelConfig& cfg) {
    return cfg.encoder_channels[2] + cfg.encoder_channels[3] + cfg.encoder_channels[4];
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> specs;
    auto conv = [&specs](const std::string& name, int cout, int cin, int k) {
        specs.push_back({name + ".w", {cout, cin, k, k}, cin * k * k, 0.0});
        specs.push_back({name + ".b", {cout}, cin * k * k, 0.0});
    };

    int prev = 1;
    for (int i = 0; i < 5; ++i) {
        conv("enc" + std::to_string(i + 1), cfg.encoder_channels[static_cast<std::size_t>(i)], prev, 3);
        prev = cfg.encoder_channels[static_cast<std::size_t>(i)];
    }

    int in_ch = cfg.encoder_channels[4] + cfg.encoder_channels[3];
    for (int i = 0; i < 4; ++i) {
        const int out_ch = cfg.decoder_channels[static_cast<std::size_t>(i)];
        const std::string prefix = "dec" + std::to_string(i + 1);
        for (int d : cfg.msfd_dilations) conv(prefix + ".d" + std::to_string(d), out_ch, in_ch, 3);
        conv(prefix + ".fuse", out_ch, static_cast<int>(cfg.msfd_dilations.size()) * out_ch, 1);
        if (i < 3) in_ch = out_ch + cfg.encoder_channels[static_cast<std::size_t>(2 - i)];
    }

    // Heatmap head starts with positive bias so the initial maps carry
    // usable mass under a relu decode.
    specs.push_back({"head.w", {cfg.num_landmarks, cfg.decoder_channels[3], 1, 1}, cfg.decoder_channels[3], 0.0});
    specs.push_back({"head.b", {cfg.num_landmarks}, cfg.decoder_channels[3], 0.5});

    const int dl = low_dim(cfg), dh = high_dim(cfg), ad = cfg.attention_dim;
    specs.push_back({"attn_low.wq", {dl, ad}, dl, 0.0});
    specs.push_back({"attn_low.wk", {dl, ad}, dl, 0.0});
    specs.push_back({"attn_low.wv", {dl, dl}, dl, 0.0});
    specs.push_back({"attn_high.wq", {dh, ad}, dh, 0.0});
    specs.push_back({"attn_high.wk", {dh, ad}, dh, 0.0});
    specs.push_back({"attn_high.wv", {dh, dh}, dh, 0.0});

    const int fused = dl + dh;
    specs.push_back({"covhead.w", {3 * cfg.num_landmarks, fused}, fused, 0.0});
    specs.push_back({"covhead.b", {3 * cfg.num_landmarks}, fused, 0.0});
    return specs;
}

std::int64_t param_count(const ModelConfig& cfg) {
    std::int64_t n = 0;
    for (const auto& s : param_specs(cfg)) n += Tensor::numel(s.shape);
    return n;
}

int ModelParams::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

std::int64_t ModelParams::total_size() const {
    std::int64_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p;
    Rng rng(derive_seed(seed, 0x1717));
    for (const auto& spec : param_specs(cfg)) {
        Tensor t = Tensor::zeros(spec.shape);
        const double lim = std::sqrt(3.0 / spec.fan_in);
        for (double& v : t.v) v = rng.uniform(-lim, lim) + spec.init_bias;
        p.names.push_back(spec.name);
        p.tensors.push_back(std::move(t));
    }
    return p;
}

std::vector<Tensor> zero_grads(const ModelParams& params) {
    std::vector<Tensor> g;
    g.reserve(params.tensors.size());
    for (const auto& t : params.tensors) g.push_back(Tensor::zeros(t.shape));
    return g;
}

namespace graph {

int ParamNodes::at(const std::string& name) const {
    const int i = params->index_of(name);
    if (i < 0) throw ShapeError("unknown parameter '" + name + "'");
    return nodes[static_cast<std::size_t>(i)];
}

ParamNodes bind_params(Tape& tape, const ModelParams& params) {
    ParamNodes pn;
    pn.params = &params;
    pn.nodes.reserve(params.tensors.size());
    for (const auto& t : params.tensors) pn.nodes.push_back(tape.leaf(t));
    return pn;
}

std::array<int, 5> encoder(Tape& t, int image, const ParamNodes& p, const ModelConfig& cfg) {
    std::array<int, 5> stages{};
    int x = image;
    for (int i = 0; i < 5; ++i) {
        if (i > 0) x = t.avgpool2x2(x);
        const std::string name = "enc" + std::to_string(i + 1);
        x = t.relu(t.conv2d(x, p.at(name + ".w"), p.at(name + ".b")));
        stages[static_cast<std::size_t>(i)] = x;
    }
    return stages;
}

int msfd(Tape& t, int x, const ParamNodes& p, const std::string& prefix, const ModelConfig& cfg) {
    std::vector<int> branches;
    branches.reserve(cfg.msfd_dilations.size());
    for (int d : cfg.msfd_dilations) {
        const std::string name = prefix + ".d" + std::to_string(d);
        branches.push_back(t.relu(t.conv2d(x, p.at(name + ".w"), p.at(name + ".b"), d)));
    }
    const int cat = t.concat_channels(branches);
    return t.relu(t.conv2d(cat, p.at(prefix + ".fuse.w"), p.at(prefix + ".fuse.b")));
}

int decoder(Tape& t, const std::array<int, 5>& stages, const ParamNodes& p, const ModelConfig& cfg) {
    int x = stages[4];
    for (int i = 0; i < 4; ++i) {
        const int up = t.upsample_bilinear2x(x);
        const int cat = t.concat_channels({up, stages[static_cast<std::size_t>(3 - i)]});
        x = msfd(t, cat, p, "dec" + std::to_string(i + 1), cfg);
    }
    return t.conv2d(x, p.at("head.w"), p.at("head.b"));
}

int attention(Tape& t, int x, int wq, int wk, int wv) {
    const int q = t.matmul(x, wq);
    const int k = t.matmul(x, wk);
    const int v = t.matmul(x, wv);
    const int d = t.val(wq).shape[1];
    const int scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    return t.matmul(t.softmax_rows(scores), v);
}

int covariance_head(Tape& t, const std::array<int, 5>& stages, const ParamNodes& p,
                    const ModelConfig& cfg) {
    auto pool = [&](int id) { return t.adaptive_avgpool(id, cfg.pooled_h, cfg.pooled_w); };
    const int low = t.concat_channels({pool(stages[0]), pool(stages[1])});
    const int high = t.concat_channels({pool(stages[2]), pool(stages[3]), pool(stages[4])});
    const int al = attention(t, t.tokens_from_chw(low), p.at("attn_low.wq"), p.at("attn_low.wk"),
                             p.at("attn_low.wv"));
    const int ah = attention(t, t.tokens_from_chw(high), p.at("attn_high.wq"), p.at("attn_high.wk"),
                             p.at("attn_high.wv"));
    const int fused = t.concat_vec({t.mean_rows(al), t.mean_rows(ah)});
    return t.linear(fused, p.at("covhead.w"), p.at("covhead.b"));
}

}  // namespace graph

namespace {

Tensor as_chw_image(const Tensor& image, const ModelConfig& cfg) {
    Tensor img = image;
    if (img.shape.size() == 2) img.shape = {1, img.shape[0], img.shape[1]};
    if (img.shape.size() != 3 || img.shape[0] != 1 || img.shape[1] != cfg.input_h ||
        img.shape[2] != cfg.input_w) {
        throw ShapeError("image shape does not match model input " + std::to_string(cfg.input_h) +
                         "x" + std::to_string(cfg.input_w));
    }
    return img;
}

}  // namespace

ForwardTrace forward_trace(const Tensor& image, const ModelParams& params, const ModelConfig& cfg) {
    cfg.validate();
    ForwardTrace tr;
    const int img = tr.tape.leaf(as_chw_image(image, cfg));
    graph::ParamNodes pn = graph::bind_params(tr.tape, params);
    tr.param_nodes = pn.nodes;
    const auto stages = graph::encoder(tr.tape, img, pn, cfg);
    tr.heatmaps = graph::decoder(tr.tape, stages, pn, cfg);
    tr.raw = graph::covariance_head(tr.tape, stages, pn, cfg);
    return tr;
}

ModelOutput model_forward(const Tensor& image, const ModelParams& params, const ModelConfig& cfg) {
    ForwardTrace tr = forward_trace(image, params, cfg);
    ModelOutput out;
    out.heatmaps = tr.tape.val(tr.heatmaps);
    const Tensor& raw = tr.tape.val(tr.raw);
    out.raw_cholesky = raw;
    out.raw_cholesky.shape = {cfg.num_landmarks, 3};
    return out;
}

PyramidFeatures encoder_forward(const Tensor& image, const ModelParams& params,
                                const ModelConfig& cfg) {
    cfg.validate();
    Tape tape;
    const int img = tape.leaf(as_chw_image(image, cfg));
    graph::ParamNodes pn = graph::bind_params(tape, params);
    const auto stages = graph::encoder(tape, img, pn, cfg);
    PyramidFeatures f;
    for (int i = 0; i < 5; ++i) f[static_cast<std::size_t>(i)] = tape.val(stages[static_cast<std::size_t>(i)]);
    return f;
}

Tensor decoder_forward(const PyramidFeatures& pyramid, const ModelParams& params,
                       const ModelConfig& cfg) {
    cfg.validate();
    Tape tape;
    std::array<int, 5> stages{};
    for (int i = 0; i < 5; ++i) stages[static_cast<std::size_t>(i)] = tape.leaf(pyramid[static_cast<std::size_t>(i)]);
    graph::ParamNodes pn = graph::bind_params(tape, params);
    return tape.val(graph::decoder(tape, stages, pn, cfg));
}

Tensor covariance_branch(const PyramidFeatures& pyramid, const ModelParams& params,
                         const ModelConfig& cfg) {
    cfg.validate();
    Tape tape;
    std::array<int, 5> stages{};
    for (int i = 0; i < 5; ++i) stages[static_cast<std::size_t>(i)] = tape.leaf(pyramid[static_cast<std::size_t>(i)]);
    graph::ParamNodes pn = graph::bind_params(tape, params);
    Tensor raw = tape.val(graph::covariance_head(tape, stages, pn, cfg));
    raw.shape = {cfg.num_landmarks, 3};
    return raw;
}

Tensor msfd_block(const Tensor& x, const std::vector<Tensor>& ws, const std::vector<Tensor>& bs,
                  const Tensor& fuse_w, const Tensor& fuse_b, const std::vector<int>& dilations) {
    if (ws.size() != dilations.size() || bs.size() != dilations.size()) {
        throw ShapeError("msfd_block needs one weight/bias pair per dilation rate");
    }
    Tape tape;
    const int xin = tape.leaf(x);
    std::vector<int> branches;
    for (std::size_t i = 0; i < dilations.size(); ++i) {
        branches.push_back(
            tape.relu(tape.conv2d(xin, tape.leaf(ws[i]), tape.leaf(bs[i]), dilations[i])));
    }
    const int cat = tape.concat_channels(branches);
    return tape.val(tape.relu(tape.conv2d(cat, tape.leaf(fuse_w), tape.leaf(fuse_b))));
}

Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
    Tape tape;
    const int out = graph::attention(tape, tape.leaf(x), tape.leaf(wq), tape.leaf(wk), tape.leaf(wv));
    return tape.val(out);
}

// --- checkpoint I/O ---

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace {
constexpr char kMagic[8] = {'U', 'L', 'D', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::string& path, const ModelParams& params, const ModelConfig& cfg,
                     const HeatmapConfig& decode) {
    nlohmann::json manifest;
    manifest["config"] = model_config_to_json(cfg);
    manifest["decode"] = {{"activation", to_string(decode.activation)}, {"gamma", decode.gamma}};
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        tensors.push_back({{"name", params.names[i]}, {"shape", params.tensors[i].shape}});
    }
    manifest["tensors"] = tensors;
    const std::string mstr = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    const std::uint64_t mlen = mstr.size();
    f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& t : params.tensors) {
        f.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    }
    if (!f) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not a checkpoint file (bad magic at byte 0): " + path);
    }
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!f || mlen == 0 || mlen > (1u << 20)) {
        throw IoError("corrupt checkpoint manifest length at byte 8: " + path);
    }
    std::string mstr(mlen, '\0');
    f.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw IoError("truncated checkpoint manifest: " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("invalid checkpoint manifest JSON: " + std::string(e.what()));
    }

    Checkpoint ck;
    ck.config = model_config_from_json(manifest.at("config"));
    if (manifest.contains("decode")) {
        ck.decode.activation =
            activation_from_string(manifest.at("decode").at("activation").get<std::string>());
        ck.decode.gamma = manifest.at("decode").at("gamma").get<double>();
    }
    const auto specs = param_specs(ck.config);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != specs.size()) {
        throw IoError("checkpoint tensor count " + std::to_string(tensors.size()) +
                      " does not match its config (" + std::to_string(specs.size()) + ")");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const std::string name = tensors[i].at("name").get<std::string>();
        const std::vector<int> shape = tensors[i].at("shape").get<std::vector<int>>();
        if (name != specs[i].name || shape != specs[i].shape) {
            throw IoError("checkpoint tensor " + std::to_string(i) + " ('" + name +
                          "') does not match the layout implied by its config");
        }
        Tensor t = Tensor::zeros(shape);
        f.read(reinterpret_cast<char*>(t.v.data()),
               static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!f) throw IoError("truncated checkpoint data at tensor '" + name + "': " + path);
        ck.params.names.push_back(name);
        ck.params.tensors.push_back(std::move(t));
    }
    return ck;
}

}  // namespace uld
