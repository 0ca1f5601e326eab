#include "dualcut/tinylm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dualcut/rand.hpp"

namespace dualcut {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;
constexpr double kSqrt1_2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kSqrt1_2)); }

double gelu_deriv(double x) {
    return 0.5 * (1.0 + std::erf(x * kSqrt1_2)) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 8) throw std::invalid_argument("vocab_size must be >= 8");
    if (d_model < 1) throw std::invalid_argument("d_model must be >= 1");
    if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
    if (n_heads < 1) throw std::invalid_argument("n_heads must be >= 1");
    if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
    if (context_len < 4) throw std::invalid_argument("context_len must be >= 4");
}

std::size_t ModelConfig::param_count() const {
    const std::size_t v = static_cast<std::size_t>(vocab_size);
    const std::size_t d = static_cast<std::size_t>(d_model);
    const std::size_t t = static_cast<std::size_t>(context_len);
    const std::size_t l = static_cast<std::size_t>(n_layers);
    return 2 * v * d + t * d + l * (12 * d * d + 13 * d) + 2 * d;
}

// Offsets into the flat parameter store, in serialization order.
struct ParamLayout {
    struct Layer {
        std::size_t ln1_g, ln1_b;
        std::size_t w_q, b_q, w_k, b_k, w_v, b_v;
        std::size_t w_o, b_o;
        std::size_t ln2_g, ln2_b;
        std::size_t w_fc1, b_fc1, w_fc2, b_fc2;
    };

    std::size_t wte = 0, wpe = 0;
    std::vector<Layer> layers;
    std::size_t ln_f_g = 0, ln_f_b = 0, w_out = 0;
    std::size_t total = 0;

    explicit ParamLayout(const ModelConfig& c) {
        const std::size_t d = static_cast<std::size_t>(c.d_model);
        const std::size_t v = static_cast<std::size_t>(c.vocab_size);
        std::size_t cur = 0;
        auto take = [&cur](std::size_t n) {
            std::size_t at = cur;
            cur += n;
            return at;
        };
        wte = take(v * d);
        wpe = take(static_cast<std::size_t>(c.context_len) * d);
        layers.resize(static_cast<std::size_t>(c.n_layers));
        for (auto& l : layers) {
            l.ln1_g = take(d);
            l.ln1_b = take(d);
            l.w_q = take(d * d);
            l.b_q = take(d);
            l.w_k = take(d * d);
            l.b_k = take(d);
            l.w_v = take(d * d);
            l.b_v = take(d);
            l.w_o = take(d * d);
            l.b_o = take(d);
            l.ln2_g = take(d);
            l.ln2_b = take(d);
            l.w_fc1 = take(4 * d * d);
            l.b_fc1 = take(4 * d);
            l.w_fc2 = take(4 * d * d);
            l.b_fc2 = take(d);
        }
        ln_f_g = take(d);
        ln_f_b = take(d);
        w_out = take(v * d);
        total = cur;
    }
};

namespace {

// Activations cached by the forward pass for exact backprop.
struct LayerCache {
    std::vector<double> nhat1, rstd1, h1;
    std::vector<double> q, k, v;
    std::vector<double> attw;  // [head][i][j], causal rows
    std::vector<double> ctx;
    std::vector<double> xmid;
    std::vector<double> nhat2, rstd2, h2;
    std::vector<double> f1, u;
};

struct Cache {
    int len = 0;          // full sequence length C + N
    int ctx_len = 0;      // C
    int n_targets = 0;    // N
    std::vector<TokenId> seq;
    std::vector<std::vector<double>> x;  // n_layers + 1 activation planes, each len*d
    std::vector<LayerCache> layers;
    std::vector<double> nhatf, rstdf, yln;
    std::vector<std::vector<double>> probs;  // N rows of vocab_size
};

void layer_norm_forward(const double* x, int len, int d, const double* g, const double* b,
                        double* nhat, double* rstd, double* out) {
    for (int i = 0; i < len; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mu;
            var += c * c;
        }
        var /= d;
        const double r = 1.0 / std::sqrt(var + kLnEps);
        rstd[i] = r;
        double* ni = nhat + static_cast<std::size_t>(i) * d;
        double* oi = out + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            ni[j] = (xi[j] - mu) * r;
            oi[j] = g[j] * ni[j] + b[j];
        }
    }
}

// dx_i = rstd * (dnhat_i - mean(dnhat) - nhat_i * mean(dnhat * nhat));
// gain/bias gradients accumulate into gg/gb; dx accumulates into dx_out.
void layer_norm_backward(const double* dy, const double* nhat, const double* rstd, const double* g,
                         int len, int d, double* gg, double* gb, double* dx_out) {
    std::vector<double> dnhat(static_cast<std::size_t>(d));
    for (int i = 0; i < len; ++i) {
        const double* dyi = dy + static_cast<std::size_t>(i) * d;
        const double* ni = nhat + static_cast<std::size_t>(i) * d;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dn = dyi[j] * g[j];
            dnhat[static_cast<std::size_t>(j)] = dn;
            gg[j] += dyi[j] * ni[j];
            gb[j] += dyi[j];
            m1 += dn;
            m2 += dn * ni[j];
        }
        m1 /= d;
        m2 /= d;
        double* dxi = dx_out + static_cast<std::size_t>(i) * d;
        const double r = rstd[i];
        for (int j = 0; j < d; ++j)
            dxi[j] += r * (dnhat[static_cast<std::size_t>(j)] - m1 - ni[j] * m2);
    }
}

// y[i] = W x[i] + b for every row, W row-major [n_out][n_in].
void linear_forward(const double* x, int len, int n_in, int n_out, const double* w,
                    const double* b, double* y) {
    for (int i = 0; i < len; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * n_in;
        double* yi = y + static_cast<std::size_t>(i) * n_out;
        for (int o = 0; o < n_out; ++o) {
            const double* wo = w + static_cast<std::size_t>(o) * n_in;
            double acc = b[o];
            for (int j = 0; j < n_in; ++j) acc += wo[j] * xi[j];
            yi[o] = acc;
        }
    }
}

// Accumulates dW, db and dx from dy.
void linear_backward(const double* x, const double* dy, int len, int n_in, int n_out,
                     const double* w, double* gw, double* gb, double* dx) {
    for (int i = 0; i < len; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * n_in;
        const double* dyi = dy + static_cast<std::size_t>(i) * n_out;
        double* dxi = dx + static_cast<std::size_t>(i) * n_in;
        for (int o = 0; o < n_out; ++o) {
            const double dval = dyi[o];
            if (dval == 0.0) continue;
            const double* wo = w + static_cast<std::size_t>(o) * n_in;
            double* gwo = gw + static_cast<std::size_t>(o) * n_in;
            gb[o] += dval;
            for (int j = 0; j < n_in; ++j) {
                gwo[j] += dval * xi[j];
                dxi[j] += dval * wo[j];
            }
        }
    }
}

void validate_tokens(std::span<const TokenId> toks, int vocab_size, const char* what) {
    for (TokenId t : toks)
        if (t < 0 || t >= vocab_size)
            throw std::invalid_argument(std::string(what) + " token id out of range");
}

}  // namespace

Model Model::init(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config_ = config;
    const ParamLayout lay(config);
    m.params_.assign(lay.total, 0.0);

    std::mt19937_64 rng(config.seed);
    auto fill_normal = [&](std::size_t off, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) m.params_[off + i] = kInitStd * standard_normal(rng);
    };
    auto fill_const = [&](std::size_t off, std::size_t n, double v) {
        for (std::size_t i = 0; i < n; ++i) m.params_[off + i] = v;
    };

    const std::size_t d = static_cast<std::size_t>(config.d_model);
    const std::size_t v = static_cast<std::size_t>(config.vocab_size);
    fill_normal(lay.wte, v * d);
    fill_normal(lay.wpe, static_cast<std::size_t>(config.context_len) * d);
    for (const auto& l : lay.layers) {
        fill_const(l.ln1_g, d, 1.0);
        fill_normal(l.w_q, d * d);
        fill_normal(l.w_k, d * d);
        fill_normal(l.w_v, d * d);
        fill_normal(l.w_o, d * d);
        fill_const(l.ln2_g, d, 1.0);
        fill_normal(l.w_fc1, 4 * d * d);
        fill_normal(l.w_fc2, 4 * d * d);
        // biases stay zero
    }
    fill_const(lay.ln_f_g, d, 1.0);
    fill_normal(lay.w_out, v * d);
    return m;
}

namespace {

void run_forward(const ModelConfig& cfg, const ParamLayout& lay, const double* p,
                 std::span<const TokenId> context, std::span<const TokenId> targets, Cache& c) {
    if (context.empty()) throw std::invalid_argument("context must be non-empty");
    if (targets.empty()) throw std::invalid_argument("targets must be non-empty");
    const int ctx_n = static_cast<int>(context.size());
    const int tgt_n = static_cast<int>(targets.size());
    const int len = ctx_n + tgt_n;
    if (len > cfg.context_len)
        throw std::invalid_argument("sequence length " + std::to_string(len) +
                                    " exceeds context_len " + std::to_string(cfg.context_len));
    validate_tokens(context, cfg.vocab_size, "context");
    validate_tokens(targets, cfg.vocab_size, "target");

    const int d = cfg.d_model;
    const int heads = cfg.n_heads;
    const int hd = d / heads;
    const int f = 4 * d;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    const std::size_t ld = static_cast<std::size_t>(len) * d;

    c.len = len;
    c.ctx_len = ctx_n;
    c.n_targets = tgt_n;
    c.seq.assign(context.begin(), context.end());
    c.seq.insert(c.seq.end(), targets.begin(), targets.end());

    c.x.assign(static_cast<std::size_t>(cfg.n_layers) + 1, std::vector<double>(ld));
    c.layers.assign(static_cast<std::size_t>(cfg.n_layers), LayerCache{});

    // embeddings
    for (int i = 0; i < len; ++i) {
        const double* te = p + lay.wte + static_cast<std::size_t>(c.seq[static_cast<std::size_t>(i)]) * d;
        const double* pe = p + lay.wpe + static_cast<std::size_t>(i) * d;
        double* xi = c.x[0].data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
    }

    for (int li = 0; li < cfg.n_layers; ++li) {
        const auto& L = lay.layers[static_cast<std::size_t>(li)];
        auto& lc = c.layers[static_cast<std::size_t>(li)];
        const double* xin = c.x[static_cast<std::size_t>(li)].data();
        double* xout = c.x[static_cast<std::size_t>(li) + 1].data();

        lc.nhat1.resize(ld);
        lc.rstd1.resize(static_cast<std::size_t>(len));
        lc.h1.resize(ld);
        layer_norm_forward(xin, len, d, p + L.ln1_g, p + L.ln1_b, lc.nhat1.data(),
                           lc.rstd1.data(), lc.h1.data());

        lc.q.resize(ld);
        lc.k.resize(ld);
        lc.v.resize(ld);
        linear_forward(lc.h1.data(), len, d, d, p + L.w_q, p + L.b_q, lc.q.data());
        linear_forward(lc.h1.data(), len, d, d, p + L.w_k, p + L.b_k, lc.k.data());
        linear_forward(lc.h1.data(), len, d, d, p + L.w_v, p + L.b_v, lc.v.data());

        lc.attw.assign(static_cast<std::size_t>(heads) * len * len, 0.0);
        lc.ctx.assign(ld, 0.0);
        std::vector<double> scores(static_cast<std::size_t>(len));
        for (int h = 0; h < heads; ++h) {
            const int hs = h * hd;
            double* wplane = lc.attw.data() + static_cast<std::size_t>(h) * len * len;
            for (int i = 0; i < len; ++i) {
                const double* qi = lc.q.data() + static_cast<std::size_t>(i) * d + hs;
                double smax = -std::numeric_limits<double>::infinity();
                for (int j = 0; j <= i; ++j) {
                    const double* kj = lc.k.data() + static_cast<std::size_t>(j) * d + hs;
                    double dot = 0.0;
                    for (int e = 0; e < hd; ++e) dot += qi[e] * kj[e];
                    const double s = dot * inv_sqrt_hd;
                    scores[static_cast<std::size_t>(j)] = s;
                    smax = std::max(smax, s);
                }
                double denom = 0.0;
                double* wrow = wplane + static_cast<std::size_t>(i) * len;
                for (int j = 0; j <= i; ++j) {
                    const double e = std::exp(scores[static_cast<std::size_t>(j)] - smax);
                    wrow[j] = e;
                    denom += e;
                }
                const double inv = 1.0 / denom;
                for (int j = 0; j <= i; ++j) wrow[j] *= inv;
                double* ci = lc.ctx.data() + static_cast<std::size_t>(i) * d + hs;
                for (int j = 0; j <= i; ++j) {
                    const double w = wrow[j];
                    const double* vj = lc.v.data() + static_cast<std::size_t>(j) * d + hs;
                    for (int e = 0; e < hd; ++e) ci[e] += w * vj[e];
                }
            }
        }

        lc.xmid.resize(ld);
        linear_forward(lc.ctx.data(), len, d, d, p + L.w_o, p + L.b_o, lc.xmid.data());
        for (std::size_t i = 0; i < ld; ++i) lc.xmid[i] += xin[i];

        lc.nhat2.resize(ld);
        lc.rstd2.resize(static_cast<std::size_t>(len));
        lc.h2.resize(ld);
        layer_norm_forward(lc.xmid.data(), len, d, p + L.ln2_g, p + L.ln2_b, lc.nhat2.data(),
                           lc.rstd2.data(), lc.h2.data());

        lc.f1.resize(static_cast<std::size_t>(len) * f);
        lc.u.resize(static_cast<std::size_t>(len) * f);
        linear_forward(lc.h2.data(), len, d, f, p + L.w_fc1, p + L.b_fc1, lc.f1.data());
        for (std::size_t i = 0; i < lc.f1.size(); ++i) lc.u[i] = gelu(lc.f1[i]);

        linear_forward(lc.u.data(), len, f, d, p + L.w_fc2, p + L.b_fc2, xout);
        for (std::size_t i = 0; i < ld; ++i) xout[i] += lc.xmid[i];
    }

    c.nhatf.resize(ld);
    c.rstdf.resize(static_cast<std::size_t>(len));
    c.yln.resize(ld);
    layer_norm_forward(c.x.back().data(), len, d, p + lay.ln_f_g, p + lay.ln_f_b, c.nhatf.data(),
                       c.rstdf.data(), c.yln.data());

    // next-token distributions at the positions preceding each target
    const int vsz = cfg.vocab_size;
    c.probs.assign(static_cast<std::size_t>(tgt_n), std::vector<double>(static_cast<std::size_t>(vsz)));
    std::vector<double> logits(static_cast<std::size_t>(vsz));
    for (int t = 0; t < tgt_n; ++t) {
        const int pos = ctx_n - 1 + t;
        const double* yi = c.yln.data() + static_cast<std::size_t>(pos) * d;
        double zmax = -std::numeric_limits<double>::infinity();
        for (int o = 0; o < vsz; ++o) {
            const double* wo = p + lay.w_out + static_cast<std::size_t>(o) * d;
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += wo[j] * yi[j];
            logits[static_cast<std::size_t>(o)] = acc;
            zmax = std::max(zmax, acc);
        }
        double denom = 0.0;
        auto& row = c.probs[static_cast<std::size_t>(t)];
        for (int o = 0; o < vsz; ++o) {
            const double e = std::exp(logits[static_cast<std::size_t>(o)] - zmax);
            row[static_cast<std::size_t>(o)] = e;
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (int o = 0; o < vsz; ++o) row[static_cast<std::size_t>(o)] *= inv;
    }
}

}  // namespace

std::vector<double> Model::forward_probs(std::span<const TokenId> context,
                                         std::span<const TokenId> targets) const {
    const ParamLayout lay(config_);
    Cache c;
    run_forward(config_, lay, params_.data(), context, targets, c);
    const double hi = std::nextafter(1.0, 0.0);
    std::vector<double> out(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const double p = c.probs[t][static_cast<std::size_t>(targets[t])];
        out[t] = std::clamp(p, 1e-300, hi);
    }
    return out;
}

std::vector<std::vector<double>> Model::forward_distributions(std::span<const TokenId> context,
                                                              std::span<const TokenId> targets) const {
    const ParamLayout lay(config_);
    Cache c;
    run_forward(config_, lay, params_.data(), context, targets, c);
    return std::move(c.probs);
}

namespace {

void run_backward(const ModelConfig& config_, const ParamLayout& lay, const double* p,
                  const Cache& c, std::span<const double> dL_dp, double scale, GradStore& into) {
    if (dL_dp.size() != static_cast<std::size_t>(c.n_targets))
        throw std::invalid_argument("dL_dp length must equal target count");
    if (into.size() != lay.total)
        throw std::invalid_argument("gradient store size does not match parameter layout");

    const TokenId* targets = c.seq.data() + c.ctx_len;
    const int d = config_.d_model, heads = config_.n_heads, hd = d / heads, f = 4 * d;
    const int len = c.len;
    const int vsz = config_.vocab_size;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    const std::size_t ld = static_cast<std::size_t>(len) * d;
    double* g = into.data();

    // through the output softmax: only the realized-token probability feeds
    // the loss, so dz_j = dL_dp * p_y * (1[j==y] - p_j)
    std::vector<double> dyln(ld, 0.0);
    for (int t = 0; t < c.n_targets; ++t) {
        const int pos = c.ctx_len - 1 + t;
        const auto y = static_cast<std::size_t>(targets[static_cast<std::size_t>(t)]);
        const auto& row = c.probs[static_cast<std::size_t>(t)];
        const double gl = scale * dL_dp[static_cast<std::size_t>(t)];
        if (gl == 0.0) continue;
        const double py = row[y];
        const double* yi = c.yln.data() + static_cast<std::size_t>(pos) * d;
        double* dyi = dyln.data() + static_cast<std::size_t>(pos) * d;
        for (int o = 0; o < vsz; ++o) {
            const double dz = gl * py * ((static_cast<std::size_t>(o) == y ? 1.0 : 0.0) -
                                         row[static_cast<std::size_t>(o)]);
            const double* wo = p + lay.w_out + static_cast<std::size_t>(o) * d;
            double* gwo = g + lay.w_out + static_cast<std::size_t>(o) * d;
            for (int j = 0; j < d; ++j) {
                gwo[j] += dz * yi[j];
                dyi[j] += dz * wo[j];
            }
        }
    }

    std::vector<double> dx(ld, 0.0);
    layer_norm_backward(dyln.data(), c.nhatf.data(), c.rstdf.data(), p + lay.ln_f_g, len, d,
                        g + lay.ln_f_g, g + lay.ln_f_b, dx.data());

    std::vector<double> du(static_cast<std::size_t>(len) * f);
    std::vector<double> df1(static_cast<std::size_t>(len) * f);
    std::vector<double> dh2(ld), dxmid(ld), dctx(ld), dq(ld), dk(ld), dv(ld), dh1(ld), dw(static_cast<std::size_t>(len));

    for (int li = config_.n_layers - 1; li >= 0; --li) {
        const auto& L = lay.layers[static_cast<std::size_t>(li)];
        const auto& lc = c.layers[static_cast<std::size_t>(li)];

        // feed-forward: xout = xmid + W2 gelu(W1 h2 + b1) + b2
        std::fill(du.begin(), du.end(), 0.0);
        linear_backward(lc.u.data(), dx.data(), len, f, d, p + L.w_fc2, g + L.w_fc2, g + L.b_fc2,
                        du.data());
        for (std::size_t i = 0; i < df1.size(); ++i) df1[i] = du[i] * gelu_deriv(lc.f1[i]);
        std::fill(dh2.begin(), dh2.end(), 0.0);
        linear_backward(lc.h2.data(), df1.data(), len, d, f, p + L.w_fc1, g + L.w_fc1, g + L.b_fc1,
                        dh2.data());
        dxmid = dx;  // residual branch
        layer_norm_backward(dh2.data(), lc.nhat2.data(), lc.rstd2.data(), p + L.ln2_g, len, d,
                            g + L.ln2_g, g + L.ln2_b, dxmid.data());

        // attention: xmid = xin + Wo ctx + bo
        std::fill(dctx.begin(), dctx.end(), 0.0);
        linear_backward(lc.ctx.data(), dxmid.data(), len, d, d, p + L.w_o, g + L.w_o, g + L.b_o,
                        dctx.data());

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int h = 0; h < heads; ++h) {
            const int hs = h * hd;
            const double* wplane = lc.attw.data() + static_cast<std::size_t>(h) * len * len;
            for (int i = 0; i < len; ++i) {
                const double* wrow = wplane + static_cast<std::size_t>(i) * len;
                const double* dci = dctx.data() + static_cast<std::size_t>(i) * d + hs;
                // dw_j = dctx_i . v_j ; dv_j += w_ij dctx_i
                for (int j = 0; j <= i; ++j) {
                    const double* vj = lc.v.data() + static_cast<std::size_t>(j) * d + hs;
                    double* dvj = dv.data() + static_cast<std::size_t>(j) * d + hs;
                    double acc = 0.0;
                    const double w = wrow[j];
                    for (int e = 0; e < hd; ++e) {
                        acc += dci[e] * vj[e];
                        dvj[e] += w * dci[e];
                    }
                    dw[static_cast<std::size_t>(j)] = acc;
                }
                // softmax jacobian within the causal row
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) dot += wrow[j] * dw[static_cast<std::size_t>(j)];
                const double* qi = lc.q.data() + static_cast<std::size_t>(i) * d + hs;
                double* dqi = dq.data() + static_cast<std::size_t>(i) * d + hs;
                for (int j = 0; j <= i; ++j) {
                    const double ds = wrow[j] * (dw[static_cast<std::size_t>(j)] - dot) * inv_sqrt_hd;
                    if (ds == 0.0) continue;
                    const double* kj = lc.k.data() + static_cast<std::size_t>(j) * d + hs;
                    double* dkj = dk.data() + static_cast<std::size_t>(j) * d + hs;
                    for (int e = 0; e < hd; ++e) {
                        dqi[e] += ds * kj[e];
                        dkj[e] += ds * qi[e];
                    }
                }
            }
        }

        std::fill(dh1.begin(), dh1.end(), 0.0);
        linear_backward(lc.h1.data(), dq.data(), len, d, d, p + L.w_q, g + L.w_q, g + L.b_q, dh1.data());
        linear_backward(lc.h1.data(), dk.data(), len, d, d, p + L.w_k, g + L.w_k, g + L.b_k, dh1.data());
        linear_backward(lc.h1.data(), dv.data(), len, d, d, p + L.w_v, g + L.w_v, g + L.b_v, dh1.data());

        // into the layer input: residual + LN1 path
        layer_norm_backward(dh1.data(), lc.nhat1.data(), lc.rstd1.data(), p + L.ln1_g, len, d,
                            g + L.ln1_g, g + L.ln1_b, dxmid.data());
        dx = dxmid;
    }

    for (int i = 0; i < len; ++i) {
        const double* dxi = dx.data() + static_cast<std::size_t>(i) * d;
        double* gte = g + lay.wte + static_cast<std::size_t>(c.seq[static_cast<std::size_t>(i)]) * d;
        double* gpe = g + lay.wpe + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            gte[j] += dxi[j];
            gpe[j] += dxi[j];
        }
    }
}

}  // namespace

void Model::backward_accumulate(std::span<const TokenId> context, std::span<const TokenId> targets,
                                std::span<const double> dL_dp, double scale, GradStore& into) const {
    const ParamLayout lay(config_);
    Cache c;
    run_forward(config_, lay, params_.data(), context, targets, c);
    run_backward(config_, lay, params_.data(), c, dL_dp, scale, into);
}

GradStore Model::backward(std::span<const TokenId> context, std::span<const TokenId> targets,
                          std::span<const double> dL_dp) const {
    GradStore g(ParamLayout(config_).total, 0.0);
    backward_accumulate(context, targets, dL_dp, 1.0, g);
    return g;
}

struct ForwardPass::Impl {
    ModelConfig config;
    ParamLayout layout;
    const double* params;  // borrowed from the model
    Cache cache;

    Impl(const ModelConfig& cfg, const double* p) : config(cfg), layout(cfg), params(p) {}
};

ForwardPass::ForwardPass(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;
ForwardPass& ForwardPass::operator=(ForwardPass&&) noexcept = default;

ForwardPass Model::forward_pass(std::span<const TokenId> context,
                                std::span<const TokenId> targets) const {
    auto impl = std::make_unique<ForwardPass::Impl>(config_, params_.data());
    run_forward(impl->config, impl->layout, impl->params, context, targets, impl->cache);
    return ForwardPass(std::move(impl));
}

std::vector<double> ForwardPass::probs() const {
    const Cache& c = impl_->cache;
    const double hi = std::nextafter(1.0, 0.0);
    std::vector<double> out(static_cast<std::size_t>(c.n_targets));
    for (int t = 0; t < c.n_targets; ++t) {
        const auto y = static_cast<std::size_t>(c.seq[static_cast<std::size_t>(c.ctx_len + t)]);
        out[static_cast<std::size_t>(t)] =
            std::clamp(c.probs[static_cast<std::size_t>(t)][y], 1e-300, hi);
    }
    return out;
}

void ForwardPass::backward_accumulate(std::span<const double> dL_dp, double scale,
                                      GradStore& into) const {
    run_backward(impl_->config, impl_->layout, impl_->params, impl_->cache, dL_dp, scale, into);
}

void Model::apply_update(const GradStore& grads, OptimizerState& opt) {
    if (grads.size() != params_.size())
        throw std::invalid_argument("gradient store size does not match parameters");
    if (opt.m.size() != params_.size() || opt.v.size() != params_.size())
        throw std::invalid_argument("optimizer state size does not match parameters");
    for (double gi : grads)
        if (!std::isfinite(gi)) throw std::runtime_error("non-finite gradient");

    const std::uint64_t t = opt.step + 1;
    const double bc1 = 1.0 - std::pow(opt.beta_1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta_2, static_cast<double>(t));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double gi = grads[i];
        opt.m[i] = opt.beta_1 * opt.m[i] + (1.0 - opt.beta_1) * gi;
        opt.v[i] = opt.beta_2 * opt.v[i] + (1.0 - opt.beta_2) * gi * gi;
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params_[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon_opt);
    }
    opt.step = t;
    ++step_count_;
}

OptimizerState OptimizerState::init(const Model& model, double learning_rate) {
    OptimizerState s;
    s.m.assign(model.parameters().size(), 0.0);
    s.v.assign(model.parameters().size(), 0.0);
    s.learning_rate = learning_rate;
    return s;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double d) { put_u64(buf, std::bit_cast<std::uint64_t>(d)); }

struct Reader {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) throw std::runtime_error("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

void Model::save_checkpoint(const std::filesystem::path& path) const {
    std::string buf;
    buf.reserve(64 + params_.size() * 8);
    buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(config_.vocab_size));
    put_u32(buf, static_cast<std::uint32_t>(config_.d_model));
    put_u32(buf, static_cast<std::uint32_t>(config_.n_layers));
    put_u32(buf, static_cast<std::uint32_t>(config_.n_heads));
    put_u32(buf, static_cast<std::uint32_t>(config_.context_len));
    put_u64(buf, config_.seed);
    put_u64(buf, step_count_);
    put_u64(buf, static_cast<std::uint64_t>(params_.size()));
    for (double d : params_) put_f64(buf, d);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Model Model::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
    r.need(sizeof(kCheckpointMagic));
    if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    r.pos = sizeof(kCheckpointMagic);

    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(r.u32());
    cfg.d_model = static_cast<int>(r.u32());
    cfg.n_layers = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.context_len = static_cast<int>(r.u32());
    cfg.seed = r.u64();
    cfg.validate();

    Model m;
    m.config_ = cfg;
    m.step_count_ = r.u64();
    const std::uint64_t count = r.u64();
    if (count != cfg.param_count())
        throw std::runtime_error("checkpoint parameter count does not match config");
    m.params_.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) m.params_[i] = r.f64();
    if (r.pos != r.size) throw std::runtime_error("checkpoint has trailing bytes");
    return m;
}

std::vector<TokenId> Model::greedy_decode(std::span<const TokenId> context, int max_new) const {
    std::vector<TokenId> ctx(context.begin(), context.end());
    std::vector<TokenId> out;
    for (int i = 0; i < max_new; ++i) {
        if (static_cast<int>(ctx.size()) + 1 > config_.context_len) break;
        // probe with an arbitrary target to obtain the next-token distribution
        const TokenId probe = 0;
        auto dist = forward_distributions(ctx, std::span<const TokenId>(&probe, 1));
        const auto& row = dist[0];
        TokenId best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(j);
        out.push_back(best);
        ctx.push_back(best);
    }
    return out;
}

}  // namespace dualcut
