// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
//
// Similarity-measure DSL: a candidate measure is a fixed operator graph over
// the four match frequencies,
//
//     Y = B3( B1(U1(a), U2(d)),  B2(U3(b), U4(c)) )
//
// encoded as seven genes U1 U2 U3 U4 B1 B2 B3. Only the operator choices
// vary; the wiring never does. Evaluation is total: guarded arithmetic maps
// singular cases to finite values and counts every guard activation.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "binsim/bitvec.hpp"
#include "binsim/errors.hpp"
#include "binsim/rng.hpp"

namespace binsim {

inline constexpr int kUnaryOpCount = 18;
inline constexpr int kBinaryOpCount = 14;

// 18^4 * 14^3 distinct genomes.
inline constexpr std::uint64_t kGenomeSpaceSize = [] {
    std::uint64_t s = 1;
    for (int i = 0; i < 4; ++i) s *= kUnaryOpCount;
    for (int i = 0; i < 3; ++i) s *= kBinaryOpCount;
    return s;
}();

enum class UnaryOp : std::uint8_t {
    Identity = 0,   // x
    Zero,           // 0 (prunes the input)
    Square,         // x^2
    Cube,           // x^3
    Sqrt,           // sqrt(max(x, 0))
    Log,            // log(max(x, 0) + eps)
    Sin,
    Cos,
    Sigmoid,        // 1 / (1 + e^-x)
    Tan,            // clamped to [-1e6, 1e6]
    Atan,
    Erf,
    Erfc,
    ExpNeg,         // e^-x
    ExpNegSq,       // e^-(x^2)
    Alpha,          // learnable channel-wise scalar
    AlphaMul,       // alpha * x
    AlphaAdd,       // alpha + x
};

enum class BinaryOp : std::uint8_t {
    Add = 0,        // x + y
    Sub,            // x - y
    RSub,           // y - x
    Mul,            // x * y
    Div,            // x / y
    DivBySum,       // x / (x + y)
    RDiv,           // y / x
    RDivBySum,      // y / (x + y)
    Max,
    Min,
    MulSigmoid,     // x * sigmoid(y)
    RMulSigmoid,    // y * sigmoid(x)
    ExpNegAbsDiff,  // e^-|x - y|
    ExpNegSqDiff,   // e^-(x - y)^2
};

// The 7-gene encoding: four unary indices in [0, 18) followed by three
// binary indices in [0, 14). Gene order is U1 U2 U3 U4 B1 B2 B3; the unary
// slots feed a, d, b, c in that order.
struct Genome {
    std::array<std::uint8_t, 4> unary{};
    std::array<std::uint8_t, 3> binary{};

    int gene(int i) const { return i < 4 ? unary[i] : binary[i - 4]; }
    void set_gene(int i, int v) {
        if (i < 4)
            unary[i] = static_cast<std::uint8_t>(v);
        else
            binary[i - 4] = static_cast<std::uint8_t>(v);
    }

    bool valid() const {
        for (auto u : unary)
            if (u >= kUnaryOpCount) return false;
        for (auto b : binary)
            if (b >= kBinaryOpCount) return false;
        return true;
    }

    // Canonical mixed-radix index in [0, kGenomeSpaceSize); doubles as the
    // fitness-cache key.
    std::uint32_t key() const {
        std::uint32_t k = 0;
        for (auto u : unary) k = k * kUnaryOpCount + u;
        for (auto b : binary) k = k * kBinaryOpCount + b;
        return k;
    }

    friend bool operator==(const Genome&, const Genome&) = default;
};

inline int hamming(const Genome& a, const Genome& b) {
    int dist = 0;
    for (int i = 0; i < 7; ++i)
        if (a.gene(i) != b.gene(i)) ++dist;
    return dist;
}

// Uniform draw over the full genome space; seven bounded draws per genome.
inline Genome random_genome(CountingRng& rng) {
    Genome g;
    for (auto& u : g.unary) u = static_cast<std::uint8_t>(rng.uniform_int(kUnaryOpCount));
    for (auto& b : g.binary) b = static_cast<std::uint8_t>(rng.uniform_int(kBinaryOpCount));
    return g;
}

// Decoded, evaluatable form of a genome. Slot i applies unary[i] to input
// (a, d, b, c)[i]; uses_alpha marks the slots whose operator references the
// learnable alpha.
struct MeasureExpr {
    std::array<UnaryOp, 4> unary{};
    std::array<BinaryOp, 3> binary{};
    std::array<bool, 4> uses_alpha{};
    Genome genome;

    int alpha_slot_count() const {
        int n = 0;
        for (bool u : uses_alpha) n += u;
        return n;
    }
    bool has_alpha() const { return alpha_slot_count() > 0; }
};

MeasureExpr decode(const Genome& genome);

// Named Table rows: "baseline" plus "M1".."M10".
Genome builtin(std::string_view name);
const std::vector<std::string>& builtin_names();

Genome parse_genome(std::string_view text);
std::string serialize_genome(const Genome& g);

const char* unary_op_name(int index);
const char* binary_op_name(int index);

// Readable infix form, fully parenthesized, e.g. "((b^3 - c) / (a^3 + d))".
std::string formula_text(const MeasureExpr& expr);
// Same with the redundant outermost parentheses removed (CLI display).
std::string formula_text_toplevel(const MeasureExpr& expr);

// ---------------------------------------------------------------------------
// Guarded evaluation
// ---------------------------------------------------------------------------

namespace guards {
inline constexpr double kEps = 1e-6;       // denominator / log floor
inline constexpr double kTanClamp = 1e6;   // |tan| ceiling
inline constexpr double kSat = 1e30;       // non-finite remap magnitude
}  // namespace guards

// Guard activations, accumulated across evaluations for diagnostics.
struct EvalStats {
    std::uint64_t div_guards = 0;
    std::uint64_t log_guards = 0;
    std::uint64_t sqrt_guards = 0;
    std::uint64_t tan_clamps = 0;
    std::uint64_t saturations = 0;

    std::uint64_t total() const {
        return div_guards + log_guards + sqrt_guards + tan_clamps + saturations;
    }
};

// Conditioning probe for gradient checks: how close one evaluation came to a
// guard threshold or a non-differentiable branch point.
struct EvalDiag {
    double min_abs_denom = std::numeric_limits<double>::infinity();
    double min_branch_margin = std::numeric_limits<double>::infinity();
    double max_abs_value = 0;
    bool guard_fired = false;

    void denom(double v) {
        min_abs_denom = std::min(min_abs_denom, std::abs(v));
    }
    void margin(double v) { min_branch_margin = std::min(min_branch_margin, std::abs(v)); }
    void value(double v) { max_abs_value = std::max(max_abs_value, std::abs(v)); }
};

namespace detail {

template <typename S>
struct UnaryEval {
    S v{};
    S dx{};
    S dalpha{};
};

template <typename S>
struct BinaryEval {
    S v{};
    S dx{};
    S dy{};
};

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// Remaps non-finite node outputs to a finite saturation value (gradient zero
// in the saturated case).
template <typename S>
void saturate(S& v, S& d1, S& d2, EvalStats* stats, EvalDiag* diag) {
    if (std::isfinite(v)) {
        if (diag) diag->value(static_cast<double>(v));
        return;
    }
    v = std::isnan(v) ? S(0) : (v > S(0) ? S(guards::kSat) : S(-guards::kSat));
    d1 = S(0);
    d2 = S(0);
    if (stats) ++stats->saturations;
    if (diag) {
        diag->guard_fired = true;
        diag->min_branch_margin = 0;
    }
}

// Denominator guard: magnitudes below eps are shifted by +eps. The shift (not
// a clamp) keeps the result finite for every real input.
template <typename S>
S guard_denom(S den, EvalStats* stats, EvalDiag* diag) {
    const S eps = S(guards::kEps);
    if (diag) {
        diag->denom(static_cast<double>(den));
        diag->margin(std::abs(static_cast<double>(den)) - guards::kEps);
    }
    if (std::abs(den) < eps) {
        if (stats) ++stats->div_guards;
        if (diag) diag->guard_fired = true;
        return den + eps;
    }
    return den;
}

template <bool WithGrad, typename S>
UnaryEval<S> unary_apply(UnaryOp op, S x, S alpha, EvalStats* stats, EvalDiag* diag) {
    const S eps = S(guards::kEps);
    UnaryEval<S> r;
    switch (op) {
        case UnaryOp::Identity:
            r.v = x;
            if constexpr (WithGrad) r.dx = S(1);
            break;
        case UnaryOp::Zero:
            r.v = S(0);
            break;
        case UnaryOp::Square:
            r.v = x * x;
            if constexpr (WithGrad) r.dx = S(2) * x;
            break;
        case UnaryOp::Cube:
            r.v = x * x * x;
            if constexpr (WithGrad) r.dx = S(3) * x * x;
            break;
        case UnaryOp::Sqrt:
            if (diag) diag->margin(static_cast<double>(x));
            if (x > S(0)) {
                r.v = std::sqrt(x);
                if constexpr (WithGrad) r.dx = S(0.5) / r.v;
            } else {
                r.v = S(0);
                if (stats && x < S(0)) ++stats->sqrt_guards;
                if (diag && x < S(0)) diag->guard_fired = true;
            }
            break;
        case UnaryOp::Log: {
            if (diag) diag->margin(static_cast<double>(x));
            const S arg = x > S(0) ? x : S(0);
            r.v = std::log(arg + eps);
            if constexpr (WithGrad) r.dx = x >= S(0) ? S(1) / (x + eps) : S(0);
            if (x < eps) {
                if (stats) ++stats->log_guards;
                if (diag) diag->guard_fired = true;
            }
            break;
        }
        case UnaryOp::Sin:
            r.v = std::sin(x);
            if constexpr (WithGrad) r.dx = std::cos(x);
            break;
        case UnaryOp::Cos:
            r.v = std::cos(x);
            if constexpr (WithGrad) r.dx = -std::sin(x);
            break;
        case UnaryOp::Sigmoid: {
            const S s = sigmoid(x);
            r.v = s;
            if constexpr (WithGrad) r.dx = s * (S(1) - s);
            break;
        }
        case UnaryOp::Tan: {
            const S t = std::tan(x);
            const S cap = S(guards::kTanClamp);
            if (diag) diag->margin(guards::kTanClamp - std::abs(static_cast<double>(t)));
            if (std::abs(t) > cap || !std::isfinite(t)) {
                r.v = t > S(0) ? cap : -cap;
                if (stats) ++stats->tan_clamps;
                if (diag) diag->guard_fired = true;
            } else {
                r.v = t;
                if constexpr (WithGrad) r.dx = S(1) + t * t;
            }
            break;
        }
        case UnaryOp::Atan:
            r.v = std::atan(x);
            if constexpr (WithGrad) r.dx = S(1) / (S(1) + x * x);
            break;
        case UnaryOp::Erf:
            r.v = std::erf(x);
            if constexpr (WithGrad)
                r.dx = S(1.1283791670955126) * std::exp(-x * x);  // 2/sqrt(pi)
            break;
        case UnaryOp::Erfc:
            r.v = std::erfc(x);
            if constexpr (WithGrad) r.dx = S(-1.1283791670955126) * std::exp(-x * x);
            break;
        case UnaryOp::ExpNeg:
            r.v = std::exp(-x);
            if constexpr (WithGrad) r.dx = -r.v;
            break;
        case UnaryOp::ExpNegSq:
            r.v = std::exp(-x * x);
            if constexpr (WithGrad) r.dx = S(-2) * x * r.v;
            break;
        case UnaryOp::Alpha:
            r.v = alpha;
            if constexpr (WithGrad) r.dalpha = S(1);
            break;
        case UnaryOp::AlphaMul:
            r.v = alpha * x;
            if constexpr (WithGrad) {
                r.dx = alpha;
                r.dalpha = x;
            }
            break;
        case UnaryOp::AlphaAdd:
            r.v = alpha + x;
            if constexpr (WithGrad) {
                r.dx = S(1);
                r.dalpha = S(1);
            }
            break;
    }
    saturate(r.v, r.dx, r.dalpha, stats, diag);
    return r;
}

template <bool WithGrad, typename S>
BinaryEval<S> binary_apply(BinaryOp op, S x, S y, EvalStats* stats, EvalDiag* diag) {
    BinaryEval<S> r;
    switch (op) {
        case BinaryOp::Add:
            r.v = x + y;
            if constexpr (WithGrad) {
                r.dx = S(1);
                r.dy = S(1);
            }
            break;
        case BinaryOp::Sub:
            r.v = x - y;
            if constexpr (WithGrad) {
                r.dx = S(1);
                r.dy = S(-1);
            }
            break;
        case BinaryOp::RSub:
            r.v = y - x;
            if constexpr (WithGrad) {
                r.dx = S(-1);
                r.dy = S(1);
            }
            break;
        case BinaryOp::Mul:
            r.v = x * y;
            if constexpr (WithGrad) {
                r.dx = y;
                r.dy = x;
            }
            break;
        case BinaryOp::Div: {
            const S den = guard_denom(y, stats, diag);
            r.v = x / den;
            if constexpr (WithGrad) {
                r.dx = S(1) / den;
                r.dy = -x / (den * den);
            }
            break;
        }
        case BinaryOp::DivBySum: {
            const S den = guard_denom(x + y, stats, diag);
            r.v = x / den;
            if constexpr (WithGrad) {
                r.dx = (den - x) / (den * den);
                r.dy = -x / (den * den);
            }
            break;
        }
        case BinaryOp::RDiv: {
            const S den = guard_denom(x, stats, diag);
            r.v = y / den;
            if constexpr (WithGrad) {
                r.dx = -y / (den * den);
                r.dy = S(1) / den;
            }
            break;
        }
        case BinaryOp::RDivBySum: {
            const S den = guard_denom(x + y, stats, diag);
            r.v = y / den;
            if constexpr (WithGrad) {
                r.dx = -y / (den * den);
                r.dy = (den - y) / (den * den);
            }
            break;
        }
        case BinaryOp::Max:
            if (diag) diag->margin(static_cast<double>(x - y));
            if (x >= y) {  // ties take the first argument
                r.v = x;
                if constexpr (WithGrad) r.dx = S(1);
            } else {
                r.v = y;
                if constexpr (WithGrad) r.dy = S(1);
            }
            break;
        case BinaryOp::Min:
            if (diag) diag->margin(static_cast<double>(x - y));
            if (x <= y) {
                r.v = x;
                if constexpr (WithGrad) r.dx = S(1);
            } else {
                r.v = y;
                if constexpr (WithGrad) r.dy = S(1);
            }
            break;
        case BinaryOp::MulSigmoid: {
            const S s = sigmoid(y);
            r.v = x * s;
            if constexpr (WithGrad) {
                r.dx = s;
                r.dy = x * s * (S(1) - s);
            }
            break;
        }
        case BinaryOp::RMulSigmoid: {
            const S s = sigmoid(x);
            r.v = y * s;
            if constexpr (WithGrad) {
                r.dx = y * s * (S(1) - s);
                r.dy = s;
            }
            break;
        }
        case BinaryOp::ExpNegAbsDiff: {
            const S u = x - y;
            if (diag) diag->margin(static_cast<double>(u));
            r.v = std::exp(-std::abs(u));
            if constexpr (WithGrad) {
                // |u| at 0 uses subgradient 0
                const S s = u > S(0) ? S(1) : (u < S(0) ? S(-1) : S(0));
                r.dx = -s * r.v;
                r.dy = s * r.v;
            }
            break;
        }
        case BinaryOp::ExpNegSqDiff: {
            const S u = x - y;
            r.v = std::exp(-u * u);
            if constexpr (WithGrad) {
                r.dx = S(-2) * u * r.v;
                r.dy = S(2) * u * r.v;
            }
            break;
        }
    }
    saturate(r.v, r.dx, r.dy, stats, diag);
    return r;
}

}  // namespace detail

// Gradient of one evaluation with respect to the four counts and the four
// alpha slots (zero for slots without alpha).
template <typename S>
struct MeasureGrad {
    S value{};
    S da{}, db{}, dc{}, dd{};
    std::array<S, 4> dalpha{};
};

// Evaluates Y for counts fed as reals. alpha holds the per-slot values for
// the channel being evaluated; slots without alpha ignore their entry.
template <typename S>
S measure_eval(const MeasureExpr& e, S a, S b, S c, S d, const std::array<S, 4>& alpha,
               EvalStats* stats = nullptr, EvalDiag* diag = nullptr) {
    using detail::binary_apply;
    using detail::unary_apply;
    const auto u0 = unary_apply<false>(e.unary[0], a, alpha[0], stats, diag);
    const auto u1 = unary_apply<false>(e.unary[1], d, alpha[1], stats, diag);
    const auto u2 = unary_apply<false>(e.unary[2], b, alpha[2], stats, diag);
    const auto u3 = unary_apply<false>(e.unary[3], c, alpha[3], stats, diag);
    const auto p1 = binary_apply<false>(e.binary[0], u0.v, u1.v, stats, diag);
    const auto p2 = binary_apply<false>(e.binary[1], u2.v, u3.v, stats, diag);
    const auto y = binary_apply<false>(e.binary[2], p1.v, p2.v, stats, diag);
    return y.v;
}

template <typename S>
MeasureGrad<S> measure_eval_grad(const MeasureExpr& e, S a, S b, S c, S d,
                                 const std::array<S, 4>& alpha, EvalStats* stats = nullptr,
                                 EvalDiag* diag = nullptr) {
    using detail::binary_apply;
    using detail::unary_apply;
    const auto u0 = unary_apply<true>(e.unary[0], a, alpha[0], stats, diag);
    const auto u1 = unary_apply<true>(e.unary[1], d, alpha[1], stats, diag);
    const auto u2 = unary_apply<true>(e.unary[2], b, alpha[2], stats, diag);
    const auto u3 = unary_apply<true>(e.unary[3], c, alpha[3], stats, diag);
    const auto p1 = binary_apply<true>(e.binary[0], u0.v, u1.v, stats, diag);
    const auto p2 = binary_apply<true>(e.binary[1], u2.v, u3.v, stats, diag);
    const auto y = binary_apply<true>(e.binary[2], p1.v, p2.v, stats, diag);

    MeasureGrad<S> g;
    g.value = y.v;
    const S gp1 = y.dx;
    const S gp2 = y.dy;
    g.da = gp1 * p1.dx * u0.dx;
    g.dd = gp1 * p1.dy * u1.dx;
    g.db = gp2 * p2.dx * u2.dx;
    g.dc = gp2 * p2.dy * u3.dx;
    g.dalpha[0] = gp1 * p1.dx * u0.dalpha;
    g.dalpha[1] = gp1 * p1.dy * u1.dalpha;
    g.dalpha[2] = gp2 * p2.dx * u2.dalpha;
    g.dalpha[3] = gp2 * p2.dy * u3.dalpha;
    return g;
}

// Channel-wise learnable parameters: one vector of length C per alpha-bearing
// unary slot (empty for the others). Owned by the training layer; read-only
// here.
struct AlphaParams {
    std::array<std::vector<double>, 4> per_slot;

    // The per-channel slice fed to measure_eval; slots without alpha read 1.
    std::array<double, 4> slice(int channel) const {
        std::array<double, 4> out{1.0, 1.0, 1.0, 1.0};
        for (int i = 0; i < 4; ++i)
            if (!per_slot[i].empty()) out[i] = per_slot[i].at(static_cast<std::size_t>(channel));
        return out;
    }

    static AlphaParams for_expr(const MeasureExpr& e, int channels, double init = 1.0) {
        AlphaParams p;
        for (int i = 0; i < 4; ++i)
            if (e.uses_alpha[i])
                p.per_slot[i].assign(static_cast<std::size_t>(channels), init);
        return p;
    }
};

inline double measure_eval(const MeasureExpr& e, const QuadCounts& counts,
                           const AlphaParams& alphas, int channel,
                           EvalStats* stats = nullptr) {
    return measure_eval<double>(e, static_cast<double>(counts.a), static_cast<double>(counts.b),
                                static_cast<double>(counts.c), static_cast<double>(counts.d),
                                alphas.slice(channel), stats);
}

}  // namespace binsim
