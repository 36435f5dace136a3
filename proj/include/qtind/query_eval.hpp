// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qtind/corpus.hpp"
#include "qtind/error.hpp"
#include "qtind/index.hpp"
#include "qtind/scoring.hpp"

namespace qtind {

struct ScoredDoc {
    DocId doc = 0;
    double score = 0.0;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Score descending, then doc id ascending.
inline bool rank_order(const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc < b.doc;
}

struct RankedList {
    std::string query_id;
    std::vector<ScoredDoc> entries;
    std::size_t k = 0;
};

/// How repeated query terms count: once per occurrence, or once.
enum class TermMode { Multiset, Deduplicated };

/// Anything that answers impact(term, doc) with a non-negative score.
template <typename S>
concept ImpactSource = requires(const S& source, std::string_view term, DocId doc) {
    { source.impact(term, doc) } -> std::convertible_to<double>;
};

struct WeightedTerm {
    std::string term;
    double weight = 1.0;
};

/// Distinct query terms in first-occurrence order, weighted by multiplicity
/// (or 1 in Deduplicated mode). Every scoring path sums in this order so
/// results agree bit for bit.
inline std::vector<WeightedTerm> weigh_terms(const Query& query, TermMode mode = TermMode::Multiset) {
    std::vector<WeightedTerm> out;
    for (const auto& t : query.terms) {
        auto it = std::find_if(out.begin(), out.end(), [&](const WeightedTerm& w) { return w.term == t; });
        if (it == out.end()) {
            out.push_back({t, 1.0});
        } else if (mode == TermMode::Multiset) {
            it->weight += 1.0;
        }
    }
    return out;
}

template <ImpactSource Source>
double aggregate_score(std::span<const WeightedTerm> terms, DocId doc, const Source& source) {
    double sum = 0.0;
    for (const auto& t : terms) sum += t.weight * source.impact(t.term, doc);
    return sum;
}

/// Sum over query term occurrences of the stored impact for (t, doc).
template <ImpactSource Source>
double aggregate_score(const Query& query, DocId doc, const Source& source,
                       TermMode mode = TermMode::Multiset) {
    const auto terms = weigh_terms(query, mode);
    return aggregate_score(std::span<const WeightedTerm>(terms), doc, source);
}

struct EvalStats {
    std::size_t postings_scanned = 0;
    std::size_t lookups = 0;
};

namespace detail {

inline std::vector<ScoredDoc> select_top(std::vector<ScoredDoc> scored, std::size_t k) {
    if (scored.size() > k) {
        std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k - 1), scored.end(),
                         rank_order);
        scored.resize(k);
    }
    std::sort(scored.begin(), scored.end(), rank_order);
    return scored;
}

inline void require_k(std::size_t k) {
    if (k == 0) throw ContractViolation("k must be >= 1");
}

}  // namespace detail

/// Exhaustive term-at-a-time evaluation with a hash accumulator. Returns the
/// k highest-scoring documents; documents scoring 0 are never returned.
inline RankedList retrieve_topk(const Query& query, const ImpactIndex& index, std::size_t k,
                                TermMode mode = TermMode::Multiset, EvalStats* stats = nullptr) {
    detail::require_k(k);
    const auto terms = weigh_terms(query, mode);
    std::unordered_map<DocId, double> acc;
    std::size_t scanned = 0;
    for (const auto& t : terms) {
        const auto* list = index.find(t.term);
        if (!list) continue;
        for (const auto& p : list->postings()) acc[p.doc] += t.weight * p.impact;
        scanned += list->size();
    }
    std::vector<ScoredDoc> scored;
    scored.reserve(acc.size());
    for (const auto& [doc, score] : acc) scored.push_back({doc, score});
    if (stats) *stats = EvalStats{scanned, 0};
    return RankedList{query.id, detail::select_top(std::move(scored), k), k};
}

/// Safe early termination over impact-ordered lists.
///
/// Lists are visited in decreasing order of weight * max_impact. While a list
/// is scanned, no document outside the accumulator can score more than
/// weight * (current impact) + (bounds of the unvisited lists). Once that
/// bound drops below the k-th best partial sum, the scan stops. Surviving
/// candidates then get their exact scores through doc-id lookups, summed in
/// the same order as retrieve_topk, so the output is identical.
inline RankedList retrieve_topk_pruned(const Query& query, const ImpactIndex& index, std::size_t k,
                                       TermMode mode = TermMode::Multiset, EvalStats* stats = nullptr) {
    detail::require_k(k);
    // Bound comparisons run on partial sums in a different order than the
    // final scores; this slack absorbs the rounding difference.
    constexpr double kSlack = 1e-9;

    const auto terms = weigh_terms(query, mode);
    struct Cursor {
        const PostingList* list;
        double weight;
        double bound;
    };
    std::vector<Cursor> cursors;
    for (const auto& t : terms) {
        if (const auto* list = index.find(t.term)) cursors.push_back({list, t.weight, t.weight * list->max_impact()});
    }
    std::sort(cursors.begin(), cursors.end(), [](const Cursor& a, const Cursor& b) {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.list->term() < b.list->term();
    });
    std::vector<double> suffix(cursors.size() + 1, 0.0);
    for (std::size_t i = cursors.size(); i-- > 0;) suffix[i] = suffix[i + 1] + cursors[i].bound;

    std::unordered_map<DocId, double> acc;
    std::vector<double> scratch;
    auto kth_partial = [&]() -> double {
        if (acc.size() < k) return 0.0;
        scratch.clear();
        for (const auto& [_, s] : acc) scratch.push_back(s);
        std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end(),
                         std::greater<>());
        return scratch[k - 1];
    };

    std::size_t scanned = 0;
    double unseen_bound = 0.0;  // best possible score of a document not in acc
    bool stopped = false;
    double threshold = 0.0;
    for (std::size_t i = 0; i < cursors.size() && !stopped; ++i) {
        const auto& c = cursors[i];
        const auto postings = c.list->postings();
        std::size_t since_check = 0;
        for (std::size_t pos = 0; pos < postings.size(); ++pos) {
            if (pos == 0 || since_check >= std::max<std::size_t>(16, acc.size() / 8)) {
                since_check = 0;
                threshold = kth_partial();
                const double bound = c.weight * postings[pos].impact + suffix[i + 1];
                if (acc.size() >= k && bound < threshold * (1.0 - kSlack)) {
                    stopped = true;
                    unseen_bound = bound;
                    break;
                }
            }
            acc[postings[pos].doc] += c.weight * postings[pos].impact;
            ++scanned;
            ++since_check;
        }
    }
    threshold = kth_partial();

    std::size_t lookups = 0;
    std::vector<ScoredDoc> scored;
    for (const auto& [doc, partial] : acc) {
        if (partial + unseen_bound < threshold * (1.0 - kSlack)) continue;
        scored.push_back({doc, aggregate_score(std::span<const WeightedTerm>(terms), doc, index)});
        lookups += terms.size();
    }
    if (stats) *stats = EvalStats{scanned, lookups};
    return RankedList{query.id, detail::select_top(std::move(scored), k), k};
}

/// Orders a candidate set by aggregate score; zero-scoring candidates stay,
/// after the positive ones, by doc id. At most k entries are returned.
template <ImpactSource Source>
RankedList rerank(const Query& query, std::span<const DocId> candidates, const Source& source,
                  std::size_t k = 1000, TermMode mode = TermMode::Multiset) {
    detail::require_k(k);
    const auto terms = weigh_terms(query, mode);
    std::vector<ScoredDoc> scored;
    scored.reserve(candidates.size());
    for (DocId doc : candidates) {
        scored.push_back({doc, aggregate_score(std::span<const WeightedTerm>(terms), doc, source)});
    }
    return RankedList{query.id, detail::select_top(std::move(scored), k), k};
}

template <ImpactSource Source>
RankedList rerank(const Query& query, const CandidateSet& candidates, const Source& source,
                  std::size_t k = 1000, TermMode mode = TermMode::Multiset) {
    return rerank(query, std::span<const DocId>(candidates.docs), source, k, mode);
}

}  // namespace qtind
