// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "qtind/corpus.hpp"
#include "qtind/error.hpp"

namespace qtind {

/// A precomputed per-(term, document) score. Always finite and >= 0.
class Impact {
public:
    constexpr Impact() = default;

    /// Throws ContractViolation unless `value` is finite and non-negative.
    explicit Impact(double value) : value_(value) {
        if (!std::isfinite(value) || value < 0.0) {
            throw ContractViolation("impact must be finite and >= 0, got " + std::to_string(value));
        }
    }

    constexpr double value() const noexcept { return value_; }
    constexpr auto operator<=>(const Impact&) const = default;

private:
    double value_ = 0.0;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Counts feeding one BM25 evaluation.
struct TermStats {
    std::uint64_t term_frequency = 0;
    std::uint64_t doc_frequency = 0;
    std::uint64_t doc_len = 0;
    std::uint64_t doc_count = 1;
    double avg_doc_len = 0.0;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); positive for every df <= N.
inline double bm25_idf(std::uint64_t doc_frequency, std::uint64_t doc_count) {
    const double n = static_cast<double>(doc_count);
    const double df = static_cast<double>(doc_frequency);
    return std::log1p((n - df + 0.5) / (df + 0.5));
}

inline Impact bm25_impact(const TermStats& stats, const Bm25Params& params = {}) {
    if (!(stats.avg_doc_len > 0.0)) throw ContractViolation("bm25: avg_doc_len must be > 0");
    if (!(params.k1 > 0.0) || params.b < 0.0 || params.b > 1.0) {
        throw ContractViolation("bm25: need k1 > 0 and b in [0,1]");
    }
    if (stats.doc_count == 0 || stats.doc_frequency > stats.doc_count) {
        throw ContractViolation("bm25: need 1 <= N and df <= N");
    }
    if (stats.term_frequency > stats.doc_len) throw ContractViolation("bm25: need tf <= doc_len");
    if (stats.term_frequency == 0) return Impact{};
    const double tf = static_cast<double>(stats.term_frequency);
    const double norm =
        params.k1 * (1.0 - params.b +
                     params.b * static_cast<double>(stats.doc_len) / stats.avg_doc_len);
    return Impact{bm25_idf(stats.doc_frequency, stats.doc_count) * tf * (params.k1 + 1.0) /
                  (tf + norm)};
}

/// ReLU at the ingestion boundary. Non-finite input throws ContractViolation.
inline Impact clamp_impact(double raw) {
    if (!std::isfinite(raw)) throw ContractViolation("non-finite raw score");
    return Impact{raw > 0.0 ? raw : 0.0};
}

/// Sparse raw (term, doc) -> score map as read from a score-table file. Raw
/// values may be negative; every read goes through clamp_impact.
class ScoreTable {
public:
    /// Throws LoadError on a duplicate key or a non-finite score.
    void insert(std::string term, DocId doc, double raw) {
        if (!std::isfinite(raw)) {
            throw LoadError("non-finite score for (" + term + ", " + std::to_string(doc) + ")");
        }
        auto row = entries_.try_emplace(std::move(term)).first;
        if (!row->second.emplace(doc, raw).second) {
            throw LoadError("duplicate score-table key (" + row->first + ", " +
                            std::to_string(doc) + ")");
        }
        ++size_;
    }

    /// Clamped stored score, 0 for absent pairs.
    Impact lookup(std::string_view term, DocId doc) const {
        auto row = entries_.find(term);
        if (row == entries_.end()) return Impact{};
        auto it = row->second.find(doc);
        return it == row->second.end() ? Impact{} : clamp_impact(it->second);
    }

    double impact(std::string_view term, DocId doc) const { return lookup(term, doc).value(); }

    std::size_t size() const noexcept { return size_; }

    /// term -> (doc -> raw score), ordered by term then doc.
    const auto& entries() const noexcept { return entries_; }

private:
    std::map<std::string, std::map<DocId, double>, std::less<>> entries_;
    std::size_t size_ = 0;
};

inline Impact table_lookup(const ScoreTable& table, std::string_view term, DocId doc) {
    return table.lookup(term, doc);
}

/// Reads `term<TAB>doc_id<TAB>score` lines.
inline ScoreTable read_score_table(std::istream& in, const std::string& name = "<table>") {
    ScoreTable table;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto fields = detail::split(line, '\t');
        if (fields.size() != 3 || fields[0].empty()) {
            throw LoadError(name, line_no, "expected term<TAB>doc_id<TAB>score");
        }
        DocId doc = detail::parse_doc_id(fields[1], name, line_no);
        auto score = detail::parse_double(fields[2]);
        if (!score) throw LoadError(name, line_no, "invalid score '" + std::string(fields[2]) + "'");
        if (!std::isfinite(*score)) {
            throw LoadError(name, line_no,
                            "non-finite score for (" + std::string(fields[0]) + ", " +
                                std::to_string(doc) + ")");
        }
        try {
            table.insert(std::string(fields[0]), doc, *score);
        } catch (const LoadError& e) {
            throw LoadError(name, line_no, e.what());
        }
    }
    return table;
}

inline ScoreTable load_score_table(const std::string& path) {
    auto in = detail::open_input(path);
    return read_score_table(in, path);
}

/// Writes entries ordered by (term, doc) with round-trip precision.
inline void write_score_table(const ScoreTable& table, std::ostream& out) {
    out.precision(17);
    for (const auto& [term, row] : table.entries()) {
        for (const auto& [doc, raw] : row) out << term << '\t' << doc << '\t' << raw << '\n';
    }
}

/// Everything a scorer may look at for one (term, document) pair.
struct PairContext {
    std::string_view term;
    const Document& doc;
    std::uint64_t term_frequency;
    std::uint64_t doc_frequency;
    const Collection& collection;
};

template <typename S>
concept ImpactScorer = requires(const S& scorer, const PairContext& ctx) {
    { scorer(ctx) } -> std::convertible_to<Impact>;
    { scorer.name() } -> std::convertible_to<std::string>;
};

struct Bm25Scorer {
    Bm25Params params;

    Impact operator()(const PairContext& ctx) const {
        return bm25_impact(TermStats{ctx.term_frequency, ctx.doc_frequency, ctx.doc.length(),
                                     ctx.collection.doc_count(), ctx.collection.avg_doc_len()},
                           params);
    }
    std::string name() const { return "bm25"; }
};

struct TableScorer {
    const ScoreTable* table;

    Impact operator()(const PairContext& ctx) const { return table->lookup(ctx.term, ctx.doc.id); }
    std::string name() const { return "table"; }
};

}  // namespace qtind
