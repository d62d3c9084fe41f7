// SPDX-License-Identifier: Apache-2.0
//
// Template library for the source-program corpus. Templates emit LEIR text
// that is parsed and validated before it enters the corpus.

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "leir/analysis.hpp"
#include "leir/dataset.hpp"
#include "leir/syntax.hpp"

namespace leir {

namespace {

class Gen {
  public:
    Gen(std::mt19937_64& rng, DType dt, int64_t cap) : rng_(rng), dt_(to_string(dt)), cap_(std::max<int64_t>(cap, 2)) {}

    int64_t dim(int64_t lo = 2) { return range(lo, std::max(lo, cap_)); }
    int64_t small(int64_t lo, int64_t hi) { return range(lo, std::min(std::max(lo, hi), std::max(lo, cap_))); }
    int64_t range(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<size_t>(range(0, static_cast<int64_t>(v.size()) - 1))];
    }

    std::string name() {
        static const std::vector<std::string> pool = [] {
            std::vector<std::string> out;
            for (char c = 'A'; c <= 'Z'; ++c) {
                std::string s(1, c);
                if (!is_reserved_name(s)) out.push_back(s);
            }
            for (char c = 'A'; c <= 'Z'; ++c) {
                if (is_reserved_name(std::string(1, c))) continue;
                for (char d = 'a'; d <= 'z'; ++d) out.push_back(std::string{c, d});
            }
            return out;
        }();
        return pool.at(next_++);
    }

    std::string t(const std::string& n, const std::string& idx) const { return fmt::format("{}^{{{},g}}_{{{}}}", n, dt_, idx); }

    // Row loop: a thread binding or a serial loop.
    std::string row_var() {
        if (!row_.empty()) return row_;
        row_ = coin(0.6) ? "tx" : "g";
        return row_;
    }
    std::string row_loop(int64_t extent) {
        std::string v = row_var();
        return v == "tx" ? fmt::format("B^{{{}}}_{{tx=0}}", extent) : fmt::format("L^{{{}}}_{{g=0}}", extent);
    }

    void expr(const std::string& loops, const std::vector<std::string>& eqs) {
        text_ += loops + "[";
        for (const auto& e : eqs) text_ += e + ";";
        text_ += "];";
    }

    const std::string& text() const { return text_; }

  private:
    std::mt19937_64& rng_;
    std::string dt_;
    int64_t cap_;
    size_t next_ = 0;
    std::string row_;
    std::string text_;
};

std::string L(int64_t extent, const std::string& var) { return fmt::format("L^{{{}}}_{{{}=0}}", extent, var); }

std::string num(double v) { return format_number(v); }

// ---- 2-D row components: current tensor X of shape [m, n] ----

struct Rows {
    std::string x;
    int64_t m = 0;
    int64_t n = 0;
};

const std::vector<std::string> kActivations = {"relu",     "sigmoid", "gelu",  "selu",  "swish", "tanh",
                                               "softplus", "hardtanh", "leaky", "elu",   "square", "abs"};

std::string activation(const std::string& kind, const std::string& x) {
    if (kind == "relu") return fmt::format("max(0,{})", x);
    if (kind == "sigmoid") return fmt::format("1/(1+exp(-{}))", x);
    if (kind == "gelu") return fmt::format("{}/(1+exp(-1.702*{}))", x, x);
    if (kind == "selu") return fmt::format("1.0507*max(0,{})+1.0507*min(0,1.67326*(exp({})-1))", x, x);
    if (kind == "swish") return fmt::format("{}/(1+exp(-{}))", x, x);
    if (kind == "tanh") return fmt::format("(exp(2*{})-1)/(exp(2*{})+1)", x, x);
    if (kind == "softplus") return fmt::format("log(1+exp({}))", x);
    if (kind == "hardtanh") return fmt::format("max(-1,min(1,{}))", x);
    if (kind == "leaky") return fmt::format("max({},0.01*{})", x, x);
    if (kind == "elu") return fmt::format("max(0,{})+min(0,exp({})-1)", x, x);
    if (kind == "square") return fmt::format("{}**2", x);
    return fmt::format("abs({})", x);
}

std::string rows_loops(Gen& g, const Rows& r) { return g.row_loop(r.m) + L(r.n, "a"); }

Rows comp_activation(Gen& g, Rows r, const std::string& kind) {
    std::string rv = g.row_var();
    std::string y = g.name();
    g.expr(rows_loops(g, r), {g.t(y, rv + ",a") + "=" + activation(kind, g.t(r.x, rv + ",a"))});
    r.x = y;
    return r;
}

Rows comp_scale(Gen& g, Rows r) {
    std::string rv = g.row_var();
    std::string y = g.name();
    double s = g.pick(std::vector<double>{0.5, 2, 0.125, 3, 0.25});
    g.expr(rows_loops(g, r), {g.t(y, rv + ",a") + "=" + g.t(r.x, rv + ",a") + (g.coin() ? "*" : "/") + num(s)});
    r.x = y;
    return r;
}

Rows comp_bias(Gen& g, Rows r) {
    std::string rv = g.row_var();
    std::string y = g.name(), b = g.name();
    g.expr(rows_loops(g, r), {g.t(y, rv + ",a") + "=" + g.t(r.x, rv + ",a") + "+" + g.t(b, "a")});
    r.x = y;
    return r;
}

Rows comp_residual(Gen& g, Rows r) {
    std::string rv = g.row_var();
    std::string y = g.name(), s = g.name();
    g.expr(rows_loops(g, r), {g.t(y, rv + ",a") + "=" + g.t(r.x, rv + ",a") + "+" + g.t(s, rv + ",a")});
    r.x = y;
    return r;
}

// max, exp-sum, normalize as three expressions over the same loops.
Rows comp_softmax(Gen& g, Rows r, bool log_form) {
    std::string rv = g.row_var();
    std::string mx = g.name(), sm = g.name(), y = g.name();
    std::string loops = rows_loops(g, r);
    std::string x = g.t(r.x, rv + ",a");
    g.expr(loops, {g.t(mx, rv) + "=max(" + g.t(mx, rv) + "," + x + ")"});
    g.expr(loops, {g.t(sm, rv) + "=" + g.t(sm, rv) + "+exp(" + x + "-" + g.t(mx, rv) + ")"});
    if (log_form) {
        g.expr(loops, {g.t(y, rv + ",a") + "=" + x + "-" + g.t(mx, rv) + "-log(" + g.t(sm, rv) + ")"});
    } else {
        g.expr(loops, {g.t(y, rv + ",a") + "=exp(" + x + "-" + g.t(mx, rv) + ")/" + g.t(sm, rv)});
    }
    r.x = y;
    return r;
}

Rows comp_layernorm(Gen& g, Rows r, bool affine) {
    std::string rv = g.row_var();
    std::string mu = g.name(), va = g.name(), y = g.name();
    std::string loops = rows_loops(g, r);
    std::string x = g.t(r.x, rv + ",a");
    std::string n = std::to_string(r.n);
    g.expr(loops, {g.t(mu, rv) + "=" + g.t(mu, rv) + "+" + x + "/" + n});
    g.expr(loops, {g.t(va, rv) + "=" + g.t(va, rv) + "+(" + x + "-" + g.t(mu, rv) + ")**2/" + n});
    std::string norm = "(" + x + "-" + g.t(mu, rv) + ")/sqrt(" + g.t(va, rv) + "+1e-05)";
    if (affine) {
        std::string gm = g.name(), bt = g.name();
        norm += "*" + g.t(gm, "a") + "+" + g.t(bt, "a");
    }
    g.expr(loops, {g.t(y, rv + ",a") + "=" + norm});
    r.x = y;
    return r;
}

Rows comp_matmul(Gen& g, Rows r) {
    std::string rv = g.row_var();
    std::string w = g.name(), y = g.name();
    int64_t n2 = g.dim();
    g.expr(g.row_loop(r.m) + L(n2, "a") + L(r.n, "c"),
           {g.t(y, rv + ",a") + "=" + g.t(y, rv + ",a") + "+" + g.t(r.x, rv + ",c") + "*" + g.t(w, "c,a")});
    r.x = y;
    r.n = n2;
    return r;
}

void comp_row_reduce(Gen& g, const Rows& r, const std::string& op) {
    std::string rv = g.row_var();
    std::string y = g.name();
    std::string x = g.t(r.x, rv + ",a");
    std::string acc = g.t(y, rv);
    std::string rhs;
    if (op == "sum") rhs = acc + "+" + x;
    else if (op == "mean") rhs = acc + "+" + x + "/" + std::to_string(r.n);
    else if (op == "max") rhs = "max(" + acc + "," + x + ")";
    else if (op == "min") rhs = "min(" + acc + "," + x + ")";
    else rhs = acc + "*" + x;
    g.expr(rows_loops(g, r), {acc + "=" + rhs});
}

// ---- families ----

using Family = std::function<std::string(Gen&)>;  // returns the variant name

std::string fam_matmul(Gen& g) {
    std::string v = g.pick(std::vector<std::string>{"square", "transposed", "diagonal", "triangular", "batched"});
    std::string rv = g.row_var();
    std::string a = g.name(), c = g.name(), d = g.name();
    if (v == "batched") {
        int64_t bt = g.small(1, 4), m = g.dim(), n = g.dim(), k = g.dim();
        // Batched form keeps the batch on the row loop.
        g.expr(g.row_loop(bt) + L(m, "a") + L(n, "c") + L(k, "d"),
               {g.t(d, rv + ",a,c") + "=" + g.t(d, rv + ",a,c") + "+" + g.t(a, rv + ",a,d") + "*" + g.t(c, rv + ",d,c")});
        return v;
    }
    int64_t m = g.dim(), n = g.dim(), k = g.dim();
    if (v == "diagonal") {
        g.expr(g.row_loop(m) + L(n, "a"), {g.t(d, rv + ",a") + "=" + g.t(a, rv) + "*" + g.t(c, rv + ",a")});
        return v;
    }
    if (v == "triangular") n = m;
    std::string rhs = v == "transposed" ? g.t(c, "a,c") : g.t(c, "c,a");
    g.expr(g.row_loop(m) + L(n, "a") + L(k, "c"),
           {g.t(d, rv + ",a") + "=" + g.t(d, rv + ",a") + "+" + g.t(a, rv + ",c") + "*" + rhs});
    if (v == "triangular") {
        std::string e = g.name();
        g.expr(g.row_loop(m) + L(n, "a"),
               {g.t(e, rv + ",a") + "=if_then_else(" + rv + ">=a," + g.t(d, rv + ",a") + ",0)"});
    }
    return v;
}

std::string fam_softmax(Gen& g) {
    bool lg = g.coin();
    Rows r{g.name(), g.dim(), g.dim()};
    comp_softmax(g, r, lg);
    return lg ? "logsoftmax" : "softmax";
}

std::string fam_activation(Gen& g) {
    std::string kind = g.pick(kActivations);
    Rows r{g.name(), g.dim(), g.dim()};
    comp_activation(g, r, kind);
    return kind;
}

std::string fam_reduction(Gen& g) {
    std::string op = g.pick(std::vector<std::string>{"sum", "mean", "max", "min", "product"});
    bool three = g.coin();
    if (!three) {
        Rows r{g.name(), g.dim(), g.dim()};
        comp_row_reduce(g, r, op);
        return op + "_2d";
    }
    std::string rv = g.row_var();
    std::string x = g.name(), y = g.name();
    int64_t m = g.dim(), n = g.dim(), k = g.dim();
    std::string xr = g.t(x, rv + ",a,c"), acc = g.t(y, rv + ",a");
    std::string rhs = op == "sum"    ? acc + "+" + xr
                      : op == "mean" ? acc + "+" + xr + "/" + std::to_string(k)
                      : op == "max"  ? "max(" + acc + "," + xr + ")"
                      : op == "min"  ? "min(" + acc + "," + xr + ")"
                                     : acc + "*" + xr;
    g.expr(g.row_loop(m) + L(n, "a") + L(k, "c"), {acc + "=" + rhs});
    return op + "_3d";
}

std::string fam_normalization(Gen& g) {
    std::string v = g.pick(std::vector<std::string>{"layer", "instance", "group"});
    if (v == "layer") {
        Rows r{g.name(), g.dim(), g.dim()};
        comp_layernorm(g, r, g.coin());
        return v;
    }
    std::string rv = g.row_var();
    std::string x = g.name(), mu = g.name(), va = g.name(), y = g.name();
    int64_t nb = g.small(1, 4), s = g.dim();
    if (v == "instance") {
        int64_t ch = g.dim();
        std::string loops = g.row_loop(nb) + L(ch, "a") + L(s, "c");
        std::string xr = g.t(x, rv + ",a,c"), m = g.t(mu, rv + ",a"), q = g.t(va, rv + ",a");
        g.expr(loops, {m + "=" + m + "+" + xr + "/" + std::to_string(s)});
        g.expr(loops, {q + "=" + q + "+(" + xr + "-" + m + ")**2/" + std::to_string(s)});
        g.expr(loops, {g.t(y, rv + ",a,c") + "=(" + xr + "-" + m + ")/sqrt(" + q + "+1e-05)"});
        return v;
    }
    int64_t groups = g.small(2, 4), per = g.small(2, 4);
    std::string loops = g.row_loop(nb) + L(groups, "a") + L(per, "c") + L(s, "d");
    std::string idx = fmt::format("{},a*{}+c,d", rv, per);
    std::string xr = g.t(x, idx), m = g.t(mu, rv + ",a"), q = g.t(va, rv + ",a");
    std::string cnt = std::to_string(per * s);
    g.expr(loops, {m + "=" + m + "+" + xr + "/" + cnt});
    g.expr(loops, {q + "=" + q + "+(" + xr + "-" + m + ")**2/" + cnt});
    g.expr(loops, {g.t(y, idx) + "=(" + xr + "-" + m + ")/sqrt(" + q + "+1e-05)"});
    return v;
}

std::string fam_pooling(Gen& g) {
    bool avg = g.coin();
    int dims = static_cast<int>(g.range(1, 3));
    int64_t k = g.range(2, 3);
    std::string rv = g.row_var();
    std::string x = g.name(), y = g.name();
    int64_t nb = g.small(1, 3), ch = g.small(2, 4);
    std::string loops = g.row_loop(nb) + L(ch, "a");
    std::string out_idx = rv + ",a", in_idx = rv + ",a";
    const char* outs[] = {"c", "d", "f"};
    const char* wins[] = {"h", "i", "j"};
    int64_t win = 1;
    for (int q = 0; q < dims; ++q) {
        int64_t o = g.small(2, std::max<int64_t>(2, 12 / (dims * k)));
        loops += L(o, outs[q]);
        out_idx += std::string(",") + outs[q];
    }
    for (int q = 0; q < dims; ++q) {
        loops += L(k, wins[q]);
        in_idx += fmt::format(",{}*{}+{}", outs[q], k, wins[q]);
        win *= k;
    }
    std::string acc = g.t(y, out_idx), xr = g.t(x, in_idx);
    std::string rhs = avg ? acc + "+" + xr + "/" + std::to_string(win) : "max(" + acc + "," + xr + ")";
    g.expr(loops, {acc + "=" + rhs});
    return std::string(avg ? "avg" : "max") + std::to_string(dims) + "d";
}

std::string fam_loss(Gen& g) {
    std::string v = g.pick(std::vector<std::string>{"mse", "huber", "cross_entropy"});
    std::string rv = g.row_var();
    int64_t m = g.dim(), n = g.dim();
    std::string a = g.name(), c = g.name(), e = g.name(), f = g.name();
    std::string loops = g.row_loop(m) + L(n, "a");
    std::string ar = g.t(a, rv + ",a"), cr = g.t(c, rv + ",a"), er = g.t(e, rv);
    if (v == "mse") {
        g.expr(loops, {er + "=" + er + "+(" + ar + "-" + cr + ")**2/" + std::to_string(n)});
    } else if (v == "huber") {
        std::string d = "abs(" + ar + "-" + cr + ")";
        std::string mn = "min(" + d + ",1)";
        g.expr(loops, {er + "=" + er + "+(0.5*" + mn + "**2+(" + d + "-" + mn + "))/" + std::to_string(n)});
    } else {
        std::string mx = g.name(), sm = g.name();
        std::string mr = g.t(mx, rv), sr = g.t(sm, rv);
        g.expr(loops, {mr + "=max(" + mr + "," + ar + ")"});
        g.expr(loops, {sr + "=" + sr + "+exp(" + ar + "-" + mr + ")"});
        g.expr(loops, {er + "=" + er + "-" + cr + "*(" + ar + "-" + mr + "-log(" + sr + "))"});
    }
    std::string fr = g.t(f, "0");
    g.expr(L(m, "a"), {fr + "=" + fr + "+" + g.t(e, "a") + "/" + std::to_string(m)});
    return v;
}

std::string fam_attention(Gen& g) {
    std::string v = g.pick(std::vector<std::string>{"mha", "gqa", "mqa"});
    int64_t bt = g.small(1, 2), s = g.small(2, 8), dh = g.small(2, 8);
    std::string q = g.name(), k = g.name(), vv = g.name(), sc = g.name(), z = g.name(), mx = g.name(), sm = g.name(),
                p = g.name(), o = g.name();
    // Heads: one bound loop, or kv groups times replicas for grouped queries.
    std::string head_loops, head, q_head, kv;
    if (v == "gqa") {
        int64_t groups = g.small(1, 2), rep = g.small(2, 3);
        head_loops = L(groups, "f") + fmt::format("B^{{{}}}_{{tx=0}}", rep);
        head = "f,tx";
        q_head = fmt::format("f*{}+tx", rep);
        kv = "g,f";
    } else {
        head_loops = fmt::format("B^{{{}}}_{{tx=0}}", g.small(2, 4));
        head = "tx";
        q_head = "tx";
        kv = v == "mqa" ? "g" : "g,tx";
    }
    std::string base = L(bt, "g") + head_loops;
    std::string hi = "g," + head;
    g.expr(base + L(s, "a") + L(s, "c") + L(dh, "d"),
           {g.t(sc, hi + ",a,c") + "=" + g.t(sc, hi + ",a,c") + "+" + g.t(q, "g," + q_head + ",a,d") + "*" +
            g.t(k, kv + ",c,d")});
    std::string loops = base + L(s, "a") + L(s, "c");
    std::string zr = g.t(z, hi + ",a,c"), mr = g.t(mx, hi + ",a"), sr = g.t(sm, hi + ",a");
    g.expr(loops, {zr + "=" + g.t(sc, hi + ",a,c") + "*" + num(1.0 / std::sqrt(static_cast<double>(dh)))});
    g.expr(loops, {mr + "=max(" + mr + "," + zr + ")"});
    g.expr(loops, {sr + "=" + sr + "+exp(" + zr + "-" + mr + ")"});
    g.expr(loops, {g.t(p, hi + ",a,c") + "=exp(" + zr + "-" + mr + ")/" + sr});
    g.expr(base + L(s, "a") + L(dh, "d") + L(s, "c"),
           {g.t(o, hi + ",a,d") + "=" + g.t(o, hi + ",a,d") + "+" + g.t(p, hi + ",a,c") + "*" + g.t(vv, kv + ",c,d")});
    return v;
}

std::string fam_composite(Gen& g) {
    int n = static_cast<int>(g.range(2, 5));
    Rows r{g.name(), g.dim(), g.dim()};
    std::string tag;
    for (int i = 0; i < n; ++i) {
        bool last = i == n - 1;
        int kind = static_cast<int>(g.range(0, last ? 8 : 7));
        switch (kind) {
            case 0: r = comp_activation(g, r, g.pick(kActivations)); tag += "a"; break;
            case 1: r = comp_scale(g, r); tag += "s"; break;
            case 2: r = comp_bias(g, r); tag += "b"; break;
            case 3: r = comp_residual(g, r); tag += "r"; break;
            case 4: r = comp_softmax(g, r, false); tag += "x"; break;
            case 5: r = comp_softmax(g, r, true); tag += "l"; break;
            case 6: r = comp_layernorm(g, r, g.coin()); tag += "n"; break;
            case 7: r = comp_matmul(g, r); tag += "m"; break;
            default:
                comp_row_reduce(g, r, g.pick(std::vector<std::string>{"sum", "mean", "max"}));
                tag += "R";
                break;
        }
    }
    return tag;
}

const std::vector<std::pair<std::string, Family>>& families() {
    static const std::vector<std::pair<std::string, Family>> f = {
        {"matmul", fam_matmul},       {"softmax", fam_softmax},     {"activation", fam_activation},
        {"reduction", fam_reduction}, {"normalization", fam_normalization}, {"pooling", fam_pooling},
        {"loss", fam_loss},           {"attention", fam_attention}, {"composite", fam_composite},
    };
    return f;
}

}  // namespace

const std::vector<std::string>& corpus_families() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [n, _] : families()) out.push_back(n);
        return out;
    }();
    return names;
}

std::vector<NamedProgram> gen_corpus(const CorpusConfig& cfg) {
    std::vector<std::pair<std::string, Family>> chosen;
    for (const auto& f : families()) {
        if (cfg.families.empty() || std::find(cfg.families.begin(), cfg.families.end(), f.first) != cfg.families.end()) {
            chosen.push_back(f);
        }
    }
    if (chosen.empty()) throw Error("UnknownFamily", "no corpus family selected");
    if (cfg.dtypes.empty()) throw Error("InvalidConfig", "no dtype selected");
    std::mt19937_64 rng(cfg.seed);
    std::vector<NamedProgram> out;
    out.reserve(cfg.count);
    for (size_t i = 0; i < cfg.count; ++i) {
        const auto& [fname, fn] = chosen[std::uniform_int_distribution<size_t>(0, chosen.size() - 1)(rng)];
        DType dt = cfg.dtypes[std::uniform_int_distribution<size_t>(0, cfg.dtypes.size() - 1)(rng)];
        std::mt19937_64 local(rng());
        Gen g(local, dt, cfg.shape_cap);
        std::string variant = fn(g);
        Program p = parse(g.text());
        auto diags = validate(p);
        if (!diags.empty()) {
            throw Error("TemplateInvalid", fname + "/" + variant + ": " + diags.front().message + " in " + g.text());
        }
        out.push_back({fmt::format("{}_{}_{}", fname, variant, i), fname, std::move(p)});
    }
    return out;
}

}  // namespace leir
