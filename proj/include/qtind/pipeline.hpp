// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "qtind/corpus.hpp"
#include "qtind/eval.hpp"
#include "qtind/index.hpp"
#include "qtind/query_eval.hpp"
#include "qtind/scoring.hpp"
#include "qtind/synthetic.hpp"

namespace qtind {

/// Evaluates fn(i) for i in [0, n) on up to `threads` workers. Results land
/// in slot i, so output order never depends on scheduling.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, Fn&& fn) {
    using Result = std::invoke_result_t<Fn&, std::size_t>;
    std::vector<Result> results(n);
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < threads; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < n && !failed; i = next++) {
                    try {
                        results[i] = fn(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

struct SearchOptions {
    std::size_t k = 1000;
    TermMode mode = TermMode::Multiset;
    bool pruned = false;
    std::size_t threads = 1;
};

inline std::vector<RankedList> search_all(std::span<const Query> queries, const ImpactIndex& index,
                                          const SearchOptions& opt) {
    return parallel_map(queries.size(), opt.threads, [&](std::size_t i) {
        return opt.pruned ? retrieve_topk_pruned(queries[i], index, opt.k, opt.mode)
                          : retrieve_topk(queries[i], index, opt.k, opt.mode);
    });
}

/// Reranks each candidate set against its query. Candidate sets whose query
/// is missing from `queries` are skipped and counted in `missing`.
template <ImpactSource Source>
std::vector<RankedList> rerank_all(std::span<const Query> queries, std::span<const CandidateSet> candidates,
                                   const Source& source, const SearchOptions& opt,
                                   std::size_t* missing = nullptr) {
    std::map<std::string, const Query*> by_id;
    for (const auto& q : queries) by_id[q.id] = &q;
    std::vector<std::pair<const Query*, const CandidateSet*>> work;
    std::size_t skipped = 0;
    for (const auto& c : candidates) {
        auto it = by_id.find(c.query_id);
        if (it == by_id.end()) {
            ++skipped;
        } else if (!c.docs.empty()) {
            work.emplace_back(it->second, &c);
        }
    }
    if (missing) *missing = skipped;
    return parallel_map(work.size(), opt.threads, [&](std::size_t i) {
        return rerank(*work[i].first, *work[i].second, source, opt.k, opt.mode);
    });
}

struct TelescopeResult {
    std::vector<RankedList> stage1;
    std::vector<RankedList> final_run;
};

/// Stage 1 retrieves top-k1 from the full collection; stage 2, when given,
/// reranks exactly those candidates. Without stage 2 the final run is stage 1.
inline TelescopeResult run_telescope(std::span<const Query> queries, const ImpactIndex& stage1,
                                     const ImpactIndex* stage2, std::size_t k1, const SearchOptions& opt) {
    SearchOptions first = opt;
    first.k = k1;
    TelescopeResult out;
    out.stage1 = search_all(queries, stage1, first);
    if (!stage2) {
        out.final_run = out.stage1;
        return out;
    }
    out.final_run = parallel_map(queries.size(), opt.threads, [&](std::size_t i) {
        std::vector<DocId> docs;
        for (const auto& e : out.stage1[i].entries) docs.push_back(e.doc);
        if (docs.empty()) return RankedList{queries[i].id, {}, opt.k};
        return rerank(queries[i], std::span<const DocId>(docs), *stage2, opt.k, opt.mode);
    });
    return out;
}

// ---------------------------------------------------------------------------
// selfcheck
// ---------------------------------------------------------------------------

struct SelfcheckConfig {
    std::size_t docs = 1000;
    std::size_t queries = 100;
    std::uint64_t seed = 42;
    std::size_t threads = 1;
    bool inject_fault = false;
    std::size_t random_pruning_instances = 200;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelfcheckReport {
    std::vector<CheckResult> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
    }
};

namespace detail {

/// Scores every document directly and sorts: the reference top-k.
inline std::vector<ScoredDoc> brute_force_topk(const Query& query, const ImpactIndex& index, std::size_t k,
                                               TermMode mode = TermMode::Multiset) {
    const auto terms = weigh_terms(query, mode);
    std::vector<ScoredDoc> all;
    for (DocId d = 0; d < index.doc_count(); ++d) {
        double s = aggregate_score(std::span<const WeightedTerm>(terms), d, index);
        if (s > 0.0) all.push_back({d, s});
    }
    std::sort(all.begin(), all.end(), rank_order);
    if (all.size() > k) all.resize(k);
    return all;
}

// Corrupts the longest list with two distinct impacts by swapping its head
// pair, breaking impact order.
inline void corrupt_one_list(ImpactIndex& index) {
    const PostingList* target = nullptr;
    for (const auto& [_, list] : index.lists()) {
        if (list.size() >= 2 && list.postings()[0].impact != list.postings()[1].impact &&
            (!target || list.size() > target->size())) {
            target = &list;
        }
    }
    if (!target) return;
    std::vector<Posting> postings(target->postings().begin(), target->postings().end());
    std::swap(postings[0], postings[1]);
    index.replace_list(PostingList::from_raw(target->term(), std::move(postings)));
}

}  // namespace detail

/// End-to-end self test on a generated corpus. Each check is independent and
/// reported by name.
inline SelfcheckReport run_selfcheck(const SelfcheckConfig& cfg) {
    SelfcheckReport report;
    auto record = [&](std::string name, bool ok, std::string detail) {
        report.checks.push_back({std::move(name), ok, std::move(detail)});
    };

    synthetic::CorpusConfig corpus_cfg;
    corpus_cfg.docs = cfg.docs;
    corpus_cfg.queries = cfg.queries;
    corpus_cfg.seed = cfg.seed;
    const auto corpus = synthetic::generate(corpus_cfg);
    const auto& collection = corpus.collection;

    const BuildConstraints capless{true, 1.0};
    const BuildConstraints capped{true, 0.05};
    auto bm25 = build_index(collection, Bm25Scorer{}, capless);
    const auto table = synthetic::make_score_table(collection, {cfg.seed + 1, 0.1, 2});
    BuildStats table_stats;
    const auto table_index = index_from_table(collection, table, capless, {}, &table_stats);
    if (cfg.inject_fault) detail::corrupt_one_list(bm25);

    {
        auto v = bm25.check();
        auto w = table_index.check();
        v.insert(v.end(), w.begin(), w.end());
        record("posting-order", v.empty(), v.empty() ? "all lists impact-ordered" : v.front());
    }

    {
        std::size_t mismatches = 0;
        for (const auto& q : corpus.queries) {
            for (std::size_t k : {10u, 100u}) {
                if (retrieve_topk(q, bm25, k).entries != detail::brute_force_topk(q, bm25, k)) ++mismatches;
                if (retrieve_topk(q, table_index, k).entries != detail::brute_force_topk(q, table_index, k)) {
                    ++mismatches;
                }
            }
        }
        record("oracle-equivalence", mismatches == 0,
               std::to_string(mismatches) + " mismatches over " + std::to_string(corpus.queries.size()) + " queries");
    }

    {
        std::size_t mismatches = 0, scanned_full = 0, scanned_pruned = 0;
        for (const auto& q : corpus.queries) {
            for (std::size_t k : {1u, 10u, 100u}) {
                EvalStats a, b;
                if (retrieve_topk(q, bm25, k, TermMode::Multiset, &a).entries !=
                    retrieve_topk_pruned(q, bm25, k, TermMode::Multiset, &b).entries) {
                    ++mismatches;
                }
                scanned_full += a.postings_scanned;
                scanned_pruned += b.postings_scanned;
            }
        }
        record("pruned-equivalence", mismatches == 0,
               std::to_string(mismatches) + " mismatches; postings scanned " + std::to_string(scanned_pruned) +
                   " pruned vs " + std::to_string(scanned_full) + " exhaustive");
    }

    {
        // Direct BM25 over the raw collection, independent of the index.
        std::map<std::string, std::uint64_t> df;
        for (const auto& doc : collection.documents()) {
            std::set<std::string> seen;
            for (const auto& t : collection.terms_of(doc)) seen.insert(t);
            for (const auto& t : seen) ++df[t];
        }
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < corpus.queries.size(); ++i) {
            const auto& q = corpus.queries[i];
            const auto ranked = rerank(q, corpus.candidates[i], bm25);
            for (const auto& e : ranked.entries) {
                const auto terms = collection.terms_of(*collection.find(e.doc));
                double direct = 0.0;
                for (const auto& t : q.terms) {
                    auto tf = static_cast<std::uint64_t>(std::count(terms.begin(), terms.end(), t));
                    if (tf == 0) continue;
                    direct += bm25_impact({tf, df[t], terms.size(), collection.doc_count(), collection.avg_doc_len()})
                                  .value();
                }
                if (std::abs(direct - e.score) > 1e-9 * std::max(1.0, direct)) ++mismatches;
            }
        }
        record("bm25-rerank-consistency", mismatches == 0, std::to_string(mismatches) + " score mismatches");
    }

    try {
        const bool exact = deserialize_index(serialize_index(bm25)) == bm25 &&
                           deserialize_index(serialize_index(table_index)) == table_index;
        auto quantized = build_index(collection, Bm25Scorer{}, capless, {true});
        const bool q_ok = deserialize_index(serialize_index(quantized)) == quantized;
        std::size_t out_of_step = 0;
        for (const auto& [term, list] : quantized.lists()) {
            const auto* exact_list = bm25.find(term);
            for (const auto& p : list.postings()) {
                if (std::abs(p.impact - exact_list->impact(p.doc)) > list.max_impact() / kQuantLevels) ++out_of_step;
            }
        }
        record("index-roundtrip", exact && q_ok && out_of_step == 0,
               std::string(exact ? "exact ok" : "exact FAILED") + ", quantized " + (q_ok ? "ok" : "FAILED") +
                   ", " + std::to_string(out_of_step) + " impacts beyond one step");
    } catch (const Error& e) {
        record("index-roundtrip", false, e.what());
    }

    {
        const bool same = serialize_index(build_index(collection, Bm25Scorer{}, capped)) ==
                          serialize_index(build_index(collection, Bm25Scorer{}, capped));
        record("build-determinism", same, same ? "bit-identical" : "serialized builds differ");
    }

    {
        const auto pruned = build_index(collection, Bm25Scorer{}, capped);
        std::size_t problems = 0;
        for (const auto& q : corpus.queries) {
            const auto terms = weigh_terms(q);
            for (DocId d = 0; d < collection.doc_count(); d += 7) {
                double expected = 0.0;
                for (const auto& t : terms) {
                    if (pruned.find(t.term)) expected += t.weight * bm25.impact(t.term, d);
                }
                if (aggregate_score(std::span<const WeightedTerm>(terms), d, pruned) != expected) ++problems;
            }
        }
        record("cap-soundness", problems == 0,
               std::to_string(problems) + " disagreements with the capless build");
    }

    {
        const auto run = to_run(search_all(corpus.queries, bm25, {1000, TermMode::Multiset, false, cfg.threads}));
        const auto mrr10 = mrr_at_k(run, corpus.qrels, 10);
        const auto mrr100 = mrr_at_k(run, corpus.qrels, 100);
        const auto recall = recall_at_k(run, corpus.qrels, 1000);
        bool ok = mrr10.mean >= 0 && mrr10.mean <= 1 && recall.mean >= 0 && recall.mean <= 1;
        for (std::size_t i = 0; i < mrr10.per_query.size(); ++i) {
            ok = ok && mrr10.per_query[i].value <= mrr100.per_query[i].value;
        }
        record("metric-bounds", ok,
               "bm25 mrr@10=" + std::to_string(mrr10.mean) + " recall@1000=" + std::to_string(recall.mean));
    }

    {
        std::size_t bad = 0;
        for (const auto& [term, list] : table_index.lists()) {
            for (const auto& p : list.postings()) {
                if (!(p.impact > 0.0) || p.impact != table.lookup(term, p.doc).value()) ++bad;
            }
        }
        record("table-clamp", bad == 0,
               std::to_string(table_stats.zero_impacts) + " clamped-to-zero entries dropped, " +
                   std::to_string(table_stats.discarded_not_in_doc) + " stray entries discarded");
    }

    {
        const auto tele = run_telescope(corpus.queries, bm25, &table_index, 100, {100, TermMode::Multiset, false, cfg.threads});
        std::size_t bad = 0;
        for (std::size_t i = 0; i < tele.stage1.size(); ++i) {
            std::multiset<DocId> a, b;
            for (const auto& e : tele.stage1[i].entries) a.insert(e.doc);
            for (const auto& e : tele.final_run[i].entries) b.insert(e.doc);
            if (a != b) ++bad;
        }
        record("telescope-permutation", bad == 0, std::to_string(bad) + " queries where stage 2 changed the set");
    }

    {
        synthetic::Rng rng(cfg.seed ^ 0x5eedULL);
        std::size_t mismatches = 0;
        for (std::size_t inst = 0; inst < cfg.random_pruning_instances; ++inst) {
            const auto& q = corpus.queries[rng.between(0, corpus.queries.size() - 1)];
            Query mixed{q.id, q.terms};
            mixed.terms.push_back(synthetic::word(rng.between(0, 50)));
            const auto k = static_cast<std::size_t>(rng.between(1, 50));
            if (retrieve_topk(mixed, table_index, k).entries != retrieve_topk_pruned(mixed, table_index, k).entries) {
                ++mismatches;
            }
        }
        record("pruned-equivalence-random", mismatches == 0,
               std::to_string(mismatches) + " mismatches over " + std::to_string(cfg.random_pruning_instances) +
                   " table-index instances");
    }

    return report;
}

}  // namespace qtind
