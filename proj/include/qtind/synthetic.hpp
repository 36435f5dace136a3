// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

// Deterministic synthetic collections, queries, and score tables. Random
// draws use raw mt19937_64 output (not <random> distributions) so the same
// seed gives the same data on every standard library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "qtind/corpus.hpp"
#include "qtind/scoring.hpp"

namespace qtind::synthetic {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi].
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
        return lo + static_cast<std::uint64_t>(uniform() * static_cast<double>(hi - lo + 1));
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer: a stateless hash for per-pair pseudo-random scores.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct CorpusConfig {
    std::size_t docs = 1000;
    std::size_t queries = 100;
    std::size_t vocabulary = 2000;
    std::size_t min_doc_len = 5;
    std::size_t max_doc_len = 60;
    double zipf_exponent = 1.0;
    std::size_t min_query_len = 1;
    std::size_t max_query_len = 4;
    std::uint64_t seed = 42;
};

struct Corpus {
    Collection collection;
    std::vector<Query> queries;
    Qrels qrels;  // each query's source document is its single relevant doc
    std::vector<CandidateSet> candidates;
};

inline std::string word(std::size_t rank) { return "w" + std::to_string(rank); }

/// Documents draw Zipf-distributed words; each query samples terms from one
/// source document (its relevant doc), with an occasional random word mixed
/// in. Candidates are the source plus random other docs, shuffled.
inline Corpus generate(const CorpusConfig& cfg, std::size_t candidates_per_query = 50) {
    Rng rng(cfg.seed);
    std::vector<double> cdf(cfg.vocabulary);
    double total = 0.0;
    for (std::size_t r = 0; r < cfg.vocabulary; ++r) {
        total += 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
        cdf[r] = total;
    }
    auto draw_word = [&] {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        return word(static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1)));
    };

    Corpus out;
    std::vector<std::vector<std::string>> texts(cfg.docs);
    for (std::size_t d = 0; d < cfg.docs; ++d) {
        const auto len = rng.between(cfg.min_doc_len, cfg.max_doc_len);
        for (std::size_t i = 0; i < len; ++i) texts[d].push_back(draw_word());
        out.collection.add(static_cast<DocId>(d), texts[d]);
    }
    for (std::size_t q = 0; q < cfg.queries; ++q) {
        const auto source = static_cast<DocId>(rng.between(0, cfg.docs - 1));
        Query query{std::to_string(q), {}};
        const auto len = rng.between(cfg.min_query_len, cfg.max_query_len);
        for (std::size_t i = 0; i < len; ++i) {
            const auto& text = texts[source];
            if (!text.empty() && rng.uniform() < 0.85) {
                query.terms.push_back(text[rng.between(0, text.size() - 1)]);
            } else {
                query.terms.push_back(draw_word());
            }
        }
        out.qrels[query.id].insert(source);

        CandidateSet cand{query.id, {source}};
        const auto want = std::min<std::size_t>(candidates_per_query, cfg.docs);
        while (cand.docs.size() < want) {
            const auto d = static_cast<DocId>(rng.between(0, cfg.docs - 1));
            if (std::find(cand.docs.begin(), cand.docs.end(), d) == cand.docs.end()) cand.docs.push_back(d);
        }
        for (std::size_t i = cand.docs.size(); i > 1; --i) std::swap(cand.docs[i - 1], cand.docs[rng.between(0, i - 1)]);
        out.candidates.push_back(std::move(cand));
        out.queries.push_back(std::move(query));
    }
    return out;
}

struct TableConfig {
    std::uint64_t seed = 7;
    /// Fraction of entries given a negative raw score (clamped on ingestion).
    double negative_fraction = 0.1;
    /// Extra entries per document for terms that do not occur in it.
    std::size_t stray_entries_per_doc = 0;
};

/// A stand-in for a learned per-term scorer: a hashed pseudo-random score per
/// (term, doc) occurrence pair, scaled by term frequency.
inline ScoreTable make_score_table(const Collection& collection, const TableConfig& cfg = {}) {
    ScoreTable table;
    const auto& vocab = collection.vocabulary();
    auto unit = [&](std::uint64_t a, std::uint64_t b) {
        return static_cast<double>(mix(cfg.seed ^ mix(a * 0x100000001b3ULL + b)) >> 11) * 0x1.0p-53;
    };
    for (const auto& doc : collection.documents()) {
        std::vector<TermId> terms(doc.terms.begin(), doc.terms.end());
        std::sort(terms.begin(), terms.end());
        for (std::size_t i = 0; i < terms.size();) {
            std::size_t j = i;
            while (j < terms.size() && terms[j] == terms[i]) ++j;
            const double u = unit(terms[i], doc.id);
            double score = (0.2 + 2.8 * u) * std::sqrt(static_cast<double>(j - i));
            if (unit(doc.id, terms[i]) < cfg.negative_fraction) score = -score;
            table.insert(vocab.term(terms[i]), doc.id, score);
            i = j;
        }
        for (std::size_t s = 0; s < cfg.stray_entries_per_doc && vocab.size() > 0; ++s) {
            const auto t = static_cast<TermId>(mix(cfg.seed + doc.id * 31 + s) % vocab.size());
            if (std::find(doc.terms.begin(), doc.terms.end(), t) != doc.terms.end()) continue;
            if (table.entries().contains(vocab.term(t)) && table.entries().at(vocab.term(t)).contains(doc.id)) continue;
            table.insert(vocab.term(t), doc.id, 1.0 + unit(t, doc.id + 1));
        }
    }
    return table;
}

inline void write_queries(const std::vector<Query>& queries, std::ostream& out) {
    for (const auto& q : queries) {
        out << q.id << '\t';
        for (std::size_t i = 0; i < q.terms.size(); ++i) out << (i ? " " : "") << q.terms[i];
        out << '\n';
    }
}

inline void write_qrels(const Qrels& qrels, std::ostream& out) {
    for (const auto& [qid, docs] : qrels) {
        for (DocId d : docs) out << qid << " 0 " << d << " 1\n";
    }
}

inline void write_candidates(const std::vector<CandidateSet>& sets, const std::vector<Query>& queries,
                             std::ostream& out) {
    for (const auto& set : sets) {
        std::string text;
        for (const auto& q : queries) {
            if (q.id != set.query_id) continue;
            for (std::size_t i = 0; i < q.terms.size(); ++i) text += (i ? " " : "") + q.terms[i];
        }
        for (DocId d : set.docs) out << set.query_id << '\t' << d << '\t' << text << "\t-\n";
    }
}

}  // namespace qtind::synthetic
