// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "binsim/measure.hpp"

#include <algorithm>
#include <cctype>

namespace binsim {

namespace {

const char* kUnaryNames[kUnaryOpCount] = {
    "x",       "0",        "x^2",    "x^3",    "sqrt(x)", "log(x)",
    "sin(x)",  "cos(x)",   "sigmoid(x)", "tan(x)", "atan(x)", "erf(x)",
    "erfc(x)", "exp(-x)",  "exp(-x^2)",  "alpha",  "alpha*x", "alpha+x",
};

const char* kBinaryNames[kBinaryOpCount] = {
    "x+y", "x-y", "y-x", "x*y", "x/y", "x/(x+y)", "y/x", "y/(x+y)",
    "max(x,y)", "min(x,y)", "x*sigmoid(y)", "y*sigmoid(x)", "exp(-|x-y|)", "exp(-(x-y)^2)",
};

Genome make_genome(std::initializer_list<int> genes) {
    Genome g;
    int i = 0;
    for (int v : genes) g.set_gene(i++, v);
    return g;
}

struct BuiltinEntry {
    const char* name;
    Genome genome;
};

// Gene reconstructions of the published rows, in listed-operator order.
// Slot order is (a, d, b, c); the final division is pair2/pair1 (y/x) except
// where the row reads pair1/pair2 (x/y).
const std::vector<BuiltinEntry>& builtin_table() {
    static const std::vector<BuiltinEntry> table = {
        {"baseline", make_genome({0, 0, 0, 0, 0, 0, 1})},   // (a+d) - (b+c)
        {"M1", make_genome({3, 0, 3, 0, 0, 1, 6})},         // (b^3 - c) / (a^3 + d)
        {"M2", make_genome({3, 0, 3, 8, 0, 0, 6})},         // (b^3 + sigmoid(c)) / (a^3 + d)
        {"M3", make_genome({3, 0, 3, 0, 0, 0, 6})},         // (b^3 + c) / (a^3 + d)
        {"M4", make_genome({3, 0, 3, 6, 0, 1, 6})},         // (b^3 - sin(c)) / (a^3 + d)
        {"M5", make_genome({3, 14, 0, 11, 0, 1, 6})},       // (b - erf(c)) / (a^3 + exp(-d^2))
        {"M6", make_genome({3, 0, 3, 0, 0, 10, 6})},        // (b^3 * sigmoid(c)) / (a^3 + d)
        {"M7", make_genome({3, 15, 3, 0, 0, 0, 4})},        // (a^3 + alpha) / (b^3 + c)
        {"M8", make_genome({3, 0, 3, 13, 0, 0, 6})},        // (b^3 + exp(-c)) / (a^3 + d)
        {"M9", make_genome({3, 2, 3, 10, 0, 4, 6})},        // (b^3 / atan(c)) / (a^3 + d^2)
        {"M10", make_genome({3, 2, 3, 8, 0, 0, 6})},        // (b^3 + sigmoid(c)) / (a^3 + d^2)
    };
    return table;
}

bool alpha_op(UnaryOp op) {
    return op == UnaryOp::Alpha || op == UnaryOp::AlphaMul || op == UnaryOp::AlphaAdd;
}

std::string unary_text(UnaryOp op, const std::string& in) {
    switch (op) {
        case UnaryOp::Identity: return in;
        case UnaryOp::Zero: return "0";
        case UnaryOp::Square: return in + "^2";
        case UnaryOp::Cube: return in + "^3";
        case UnaryOp::Sqrt: return "sqrt(" + in + ")";
        case UnaryOp::Log: return "log(" + in + ")";
        case UnaryOp::Sin: return "sin(" + in + ")";
        case UnaryOp::Cos: return "cos(" + in + ")";
        case UnaryOp::Sigmoid: return "sigmoid(" + in + ")";
        case UnaryOp::Tan: return "tan(" + in + ")";
        case UnaryOp::Atan: return "atan(" + in + ")";
        case UnaryOp::Erf: return "erf(" + in + ")";
        case UnaryOp::Erfc: return "erfc(" + in + ")";
        case UnaryOp::ExpNeg: return "exp(-" + in + ")";
        case UnaryOp::ExpNegSq: return "exp(-" + in + "^2)";
        case UnaryOp::Alpha: return "alpha";
        case UnaryOp::AlphaMul: return "(alpha * " + in + ")";
        case UnaryOp::AlphaAdd: return "(alpha + " + in + ")";
    }
    return in;
}

std::string binary_text(BinaryOp op, const std::string& x, const std::string& y) {
    switch (op) {
        case BinaryOp::Add: return "(" + x + " + " + y + ")";
        case BinaryOp::Sub: return "(" + x + " - " + y + ")";
        case BinaryOp::RSub: return "(" + y + " - " + x + ")";
        case BinaryOp::Mul: return "(" + x + " * " + y + ")";
        case BinaryOp::Div: return "(" + x + " / " + y + ")";
        case BinaryOp::DivBySum: return "(" + x + " / (" + x + " + " + y + "))";
        case BinaryOp::RDiv: return "(" + y + " / " + x + ")";
        case BinaryOp::RDivBySum: return "(" + y + " / (" + x + " + " + y + "))";
        case BinaryOp::Max: return "max(" + x + ", " + y + ")";
        case BinaryOp::Min: return "min(" + x + ", " + y + ")";
        case BinaryOp::MulSigmoid: return "(" + x + " * sigmoid(" + y + "))";
        case BinaryOp::RMulSigmoid: return "(" + y + " * sigmoid(" + x + "))";
        case BinaryOp::ExpNegAbsDiff: return "exp(-|" + x + " - " + y + "|)";
        case BinaryOp::ExpNegSqDiff: return "exp(-(" + x + " - " + y + ")^2)";
    }
    return "";
}

}  // namespace

MeasureExpr decode(const Genome& genome) {
    for (int i = 0; i < 4; ++i)
        if (genome.unary[i] >= kUnaryOpCount)
            throw InvalidGenomeError("decode: unary gene " + std::to_string(i + 1) +
                                     " out of range: " + std::to_string(genome.unary[i]) +
                                     " (valid 0.." + std::to_string(kUnaryOpCount - 1) + ")");
    for (int i = 0; i < 3; ++i)
        if (genome.binary[i] >= kBinaryOpCount)
            throw InvalidGenomeError("decode: binary gene " + std::to_string(i + 5) +
                                     " out of range: " + std::to_string(genome.binary[i]) +
                                     " (valid 0.." + std::to_string(kBinaryOpCount - 1) + ")");
    MeasureExpr e;
    e.genome = genome;
    for (int i = 0; i < 4; ++i) {
        e.unary[i] = static_cast<UnaryOp>(genome.unary[i]);
        e.uses_alpha[i] = alpha_op(e.unary[i]);
    }
    for (int i = 0; i < 3; ++i) e.binary[i] = static_cast<BinaryOp>(genome.binary[i]);
    return e;
}

Genome builtin(std::string_view name) {
    for (const auto& entry : builtin_table())
        if (name == entry.name) return entry.genome;
    throw InvalidGenomeError("builtin: unknown measure '" + std::string(name) +
                             "' (known: baseline, M1..M10)");
}

const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& entry : builtin_table()) out.emplace_back(entry.name);
        return out;
    }();
    return names;
}

Genome parse_genome(std::string_view text) {
    // trim surrounding whitespace
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
        text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
        text.remove_suffix(1);
    if (text.empty()) throw ParseError("parse_genome: empty input");

    std::array<int, 7> genes{};
    if (text.find(',') != std::string_view::npos) {
        std::size_t pos = 0;
        int field = 0;
        while (true) {
            const std::size_t comma = text.find(',', pos);
            const std::string_view tok =
                text.substr(pos, comma == std::string_view::npos ? comma : comma - pos);
            if (field >= 7)
                throw ParseError("parse_genome: expected 7 genes, found more at position " +
                                 std::to_string(pos));
            if (tok.empty())
                throw ParseError("parse_genome: empty gene at position " + std::to_string(pos));
            int value = 0;
            for (std::size_t i = 0; i < tok.size(); ++i) {
                const char ch = tok[i];
                if (!std::isdigit(static_cast<unsigned char>(ch)))
                    throw ParseError("parse_genome: invalid character '" + std::string(1, ch) +
                                     "' at position " + std::to_string(pos + i));
                value = value * 10 + (ch - '0');
                if (value > 1000)
                    throw ParseError("parse_genome: gene value too large at position " +
                                     std::to_string(pos));
            }
            genes[field++] = value;
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (field != 7)
            throw ParseError("parse_genome: expected 7 genes, got " + std::to_string(field));
    } else {
        // compact form: exactly 7 digit characters (every gene <= 9)
        if (text.size() != 7)
            throw ParseError("parse_genome: compact form must be exactly 7 digits, got length " +
                             std::to_string(text.size()));
        for (std::size_t i = 0; i < 7; ++i) {
            const char ch = text[i];
            if (!std::isdigit(static_cast<unsigned char>(ch)))
                throw ParseError("parse_genome: invalid character '" + std::string(1, ch) +
                                 "' at position " + std::to_string(i));
            genes[i] = ch - '0';
        }
    }

    Genome g;
    for (int i = 0; i < 7; ++i) {
        const int limit = i < 4 ? kUnaryOpCount : kBinaryOpCount;
        const char* kind = i < 4 ? "unary" : "binary";
        if (genes[i] >= limit)
            throw ParseError("parse_genome: " + std::string(kind) + " gene " +
                             std::to_string(i + 1) + " out of range: " + std::to_string(genes[i]) +
                             " (valid 0.." + std::to_string(limit - 1) + ")");
        g.set_gene(i, genes[i]);
    }
    return g;
}

std::string serialize_genome(const Genome& g) {
    std::string out;
    for (int i = 0; i < 7; ++i) {
        if (i) out.push_back(',');
        out += std::to_string(g.gene(i));
    }
    return out;
}

const char* unary_op_name(int index) { return kUnaryNames[index]; }
const char* binary_op_name(int index) { return kBinaryNames[index]; }

std::string formula_text(const MeasureExpr& expr) {
    static const char* inputs[4] = {"a", "d", "b", "c"};
    std::string slot[4];
    for (int i = 0; i < 4; ++i) slot[i] = unary_text(expr.unary[i], inputs[i]);
    const std::string p1 = binary_text(expr.binary[0], slot[0], slot[1]);
    const std::string p2 = binary_text(expr.binary[1], slot[2], slot[3]);
    return binary_text(expr.binary[2], p1, p2);
}

std::string formula_text_toplevel(const MeasureExpr& expr) {
    std::string s = formula_text(expr);
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') return s;
    // strip only if the opening paren closes at the final character
    int depth = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(') ++depth;
        if (s[i] == ')' && --depth == 0 && i + 1 != s.size()) return s;
    }
    return s.substr(1, s.size() - 2);
}

}  // namespace binsim
