// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

// qtind: build impact indexes, run retrieval/reranking, evaluate runs.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "qtind/corpus.hpp"
#include "qtind/eval.hpp"
#include "qtind/index.hpp"
#include "qtind/pipeline.hpp"
#include "qtind/query_eval.hpp"
#include "qtind/scoring.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Effective settings, printed as a `# key: value` header on every report.
class Header {
public:
    explicit Header(std::string command) { add("command", std::move(command)); }

    template <typename T>
    void add(const std::string& key, const T& value) {
        std::ostringstream os;
        os << std::boolalpha << value;
        lines_.emplace_back(key, os.str());
    }

    void print(std::ostream& out) const {
        out << "# qtind\n";
        for (const auto& [k, v] : lines_) out << "# " << k << ": " << v << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> lines_;
};

std::string cap_string(double cap) {
    std::ostringstream os;
    os << cap;
    return os.str();
}

std::string default_tag(const qtind::ImpactIndex& index, qtind::TermMode mode) {
    std::string tag = index.scorer_name() + "_dfcap" + cap_string(index.constraints().df_cap_fraction);
    if (!index.constraints().require_term_in_doc) tag += "_allpairs";
    if (index.quantized()) tag += "_q16";
    if (mode == qtind::TermMode::Deduplicated) tag += "_dedup";
    return tag;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw qtind::LoadError("cannot open " + path + " for writing");
    return out;
}

void write_run_file(const std::string& path, const std::vector<qtind::RankedList>& lists, const std::string& tag) {
    auto out = open_output(path);
    qtind::write_run(out, lists, tag);
    if (!out) throw qtind::LoadError("write failed: " + path);
}

struct MetricSpec {
    enum class Kind { Mrr, Recall } kind;
    std::size_t depth;
};

MetricSpec parse_metric(const std::string& text) {
    auto at = text.find('@');
    if (at == std::string::npos) throw UsageError("metric must look like mrr@10 or recall@1000");
    auto name = text.substr(0, at);
    auto depth = qtind::detail::parse_int<std::size_t>(text.substr(at + 1));
    if (!depth || *depth == 0) throw UsageError("invalid metric depth in '" + text + "'");
    if (name == "mrr") return {MetricSpec::Kind::Mrr, *depth};
    if (name == "recall") return {MetricSpec::Kind::Recall, *depth};
    throw UsageError("unknown metric '" + name + "' (use mrr@K or recall@K)");
}

qtind::EvalReport compute_metric(const MetricSpec& m, const qtind::Run& run, const qtind::Qrels& qrels) {
    return m.kind == MetricSpec::Kind::Mrr ? qtind::mrr_at_k(run, qrels, m.depth)
                                           : qtind::recall_at_k(run, qrels, m.depth);
}

struct CommonEval {
    std::size_t k = 1000;
    bool dedup = false;
    std::string tag;
    std::size_t threads = 1;

    qtind::TermMode mode() const { return dedup ? qtind::TermMode::Deduplicated : qtind::TermMode::Multiset; }
};

void add_eval_flags(CLI::App* cmd, CommonEval& c) {
    cmd->add_option("--k", c.k, "result depth")->check(CLI::PositiveNumber);
    cmd->add_flag("--dedup", c.dedup, "count each distinct query term once");
    cmd->add_option("--tag", c.tag, "run tag (default: scorer and constraints)");
    cmd->add_option("--threads", c.threads, "worker threads")->envname("QTIND_THREADS")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qtind: precomputed-impact retrieval engine"};
    app.require_subcommand(1);

    // index / import-scores
    std::string collection_path, table_path, out_path, scorer = "bm25";
    double df_cap = 0.05, k1 = 1.2, b = 0.75;
    bool quantize = false, all_pairs = false;
    auto add_build_flags = [&](CLI::App* cmd) {
        cmd->add_option("--collection", collection_path, "collection TSV")->required()->check(CLI::ExistingFile);
        cmd->add_option("--df-cap", df_cap, "drop terms with df > ceil(cap * N)")->check(CLI::Range(1e-12, 1.0));
        cmd->add_flag("--quantize", quantize, "16-bit linear impact quantization");
        cmd->add_flag("--all-pairs", all_pairs, "score pairs whose term does not occur in the doc");
        cmd->add_option("--out", out_path, "index file to write")->required();
    };
    auto* index_cmd = app.add_subcommand("index", "build an impact index from a collection");
    add_build_flags(index_cmd);
    index_cmd->add_option("--scorer", scorer, "impact scorer")->check(CLI::IsMember({"bm25", "table"}));
    index_cmd->add_option("--table", table_path, "score-table TSV (with --scorer table)")->check(CLI::ExistingFile);
    index_cmd->add_option("--k1", k1, "BM25 k1")->check(CLI::PositiveNumber);
    index_cmd->add_option("--b", b, "BM25 b")->check(CLI::Range(0.0, 1.0));

    auto* import_cmd = app.add_subcommand("import-scores", "build an index from an external score table");
    add_build_flags(import_cmd);
    import_cmd->add_option("--table", table_path, "score-table TSV")->required()->check(CLI::ExistingFile);

    // search / rerank / telescope
    std::string index_path, queries_path, candidates_path, qrels_path, stage2_path;
    CommonEval common;
    bool pruned = false;
    std::size_t k1_depth = 1000;

    auto* search_cmd = app.add_subcommand("search", "full-collection top-k retrieval");
    search_cmd->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--queries", queries_path)->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--out", out_path, "TREC run file")->required();
    search_cmd->add_flag("--pruned", pruned, "safe early termination on impact bounds");
    add_eval_flags(search_cmd, common);

    auto* rerank_cmd = app.add_subcommand("rerank", "rerank candidate sets (top-1000 file)");
    rerank_cmd->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("--candidates", candidates_path)->required()->check(CLI::ExistingFile);
    rerank_cmd->add_option("--queries", queries_path, "query text for each candidate set")
        ->required()
        ->check(CLI::ExistingFile);
    rerank_cmd->add_option("--out", out_path, "TREC run file")->required();
    add_eval_flags(rerank_cmd, common);

    auto* tele_cmd = app.add_subcommand("telescope", "stage-1 retrieval, then stage-2 rerank of its top k1");
    tele_cmd->add_option("--stage1", index_path, "stage-1 index")->required()->check(CLI::ExistingFile);
    tele_cmd->add_option("--stage2", stage2_path, "stage-2 index (omit for identity stage)")->check(CLI::ExistingFile);
    tele_cmd->add_option("--queries", queries_path)->required()->check(CLI::ExistingFile);
    tele_cmd->add_option("--k1", k1_depth, "stage-1 depth")->check(CLI::PositiveNumber);
    tele_cmd->add_option("--qrels", qrels_path, "qrels for the stage-1 recall report")->check(CLI::ExistingFile);
    tele_cmd->add_option("--out", out_path, "final TREC run file")->required();
    tele_cmd->add_flag("--pruned", pruned, "safe early termination in stage 1");
    add_eval_flags(tele_cmd, common);

    // eval / compare
    std::string run_path, run_b_path, metric_text = "mrr@10", per_query_path;
    auto* eval_cmd = app.add_subcommand("eval", "score a run against qrels");
    eval_cmd->add_option("--run", run_path)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--qrels", qrels_path)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--metric", metric_text, "mrr@K or recall@K");
    eval_cmd->add_option("--per-query", per_query_path, "write per-query values as TSV");

    auto* compare_cmd = app.add_subcommand("compare", "paired t-test between two runs");
    compare_cmd->add_option("--run-a", run_path)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--run-b", run_b_path)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--qrels", qrels_path)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--metric", metric_text, "mrr@K or recall@K");

    // selfcheck
    qtind::SelfcheckConfig self;
    auto* self_cmd = app.add_subcommand("selfcheck", "end-to-end invariant check on a synthetic corpus");
    self_cmd->add_option("--docs", self.docs)->check(CLI::Range(10, 10000000));
    self_cmd->add_option("--queries", self.queries)->check(CLI::Range(1, 10000000));
    self_cmd->add_option("--seed", self.seed)->envname("QTIND_SEED");
    self_cmd->add_option("--threads", self.threads)->envname("QTIND_THREADS")->check(CLI::PositiveNumber);
    self_cmd->add_flag("--inject-fault", self.inject_fault, "corrupt one posting list before checking");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (index_cmd->parsed() || import_cmd->parsed()) {
            const bool from_table = import_cmd->parsed() || scorer == "table";
            if (index_cmd->parsed()) {
                if (scorer == "table" && table_path.empty()) throw UsageError("--scorer table requires --table");
                if (scorer == "bm25" && !table_path.empty()) throw UsageError("--table is only valid with --scorer table");
            }
            const qtind::BuildConstraints constraints{!all_pairs, df_cap};
            const qtind::IndexOptions options{quantize};
            Header header(index_cmd->parsed() ? "index" : "import-scores");
            header.add("collection", collection_path);
            header.add("scorer", from_table ? "table" : "bm25");
            if (from_table) header.add("table", table_path);
            else {
                header.add("k1", k1);
                header.add("b", b);
            }
            header.add("df_cap", df_cap);
            header.add("require_term_in_doc", !all_pairs);
            header.add("quantize", quantize);
            header.add("out", out_path);

            const auto collection = qtind::load_collection(collection_path);
            qtind::BuildStats stats;
            qtind::ImpactIndex index;
            if (from_table) {
                const auto table = qtind::load_score_table(table_path);
                index = qtind::index_from_table(collection, table, constraints, options, &stats);
            } else {
                index = qtind::build_index(collection, qtind::Bm25Scorer{{k1, b}}, constraints, options, &stats);
            }
            qtind::write_index(index, out_path);
            header.print(std::cout);
            std::cout << "docs\t" << collection.doc_count() << "\n"
                      << "avg_doc_len\t" << collection.avg_doc_len() << "\n"
                      << "df_limit\t" << constraints.df_limit(collection.doc_count()) << "\n"
                      << "terms_indexed\t" << index.lists().size() << "\n"
                      << "terms_capped\t" << stats.capped_terms << "\n"
                      << "postings\t" << stats.postings << "\n"
                      << "zero_impacts_dropped\t" << stats.zero_impacts << "\n"
                      << "discarded_not_in_doc\t" << stats.discarded_not_in_doc << "\n";
            if (stats.discarded_not_in_doc > 0) {
                std::cerr << "warning: " << stats.discarded_not_in_doc
                          << " score-table entries name a term absent from their document; discarded\n";
            }
            return 0;
        }

        if (search_cmd->parsed() || rerank_cmd->parsed() || tele_cmd->parsed()) {
            const auto index = qtind::read_index(index_path);
            const auto queries = qtind::load_queries(queries_path);
            const auto tag = common.tag.empty() ? default_tag(index, common.mode()) : common.tag;
            qtind::SearchOptions opt{common.k, common.mode(), pruned, common.threads};
            Header header(search_cmd->parsed() ? "search" : rerank_cmd->parsed() ? "rerank" : "telescope");
            header.add(tele_cmd->parsed() ? "stage1" : "index", index_path);
            header.add("queries", queries_path);
            header.add("k", common.k);
            header.add("term_mode", common.dedup ? "dedup" : "multiset");
            header.add("threads", common.threads);
            header.add("tag", tag);
            header.add("out", out_path);

            if (search_cmd->parsed()) {
                header.add("pruned", pruned);
                const auto lists = qtind::search_all(queries, index, opt);
                write_run_file(out_path, lists, tag);
                header.print(std::cout);
                std::cout << "queries\t" << lists.size() << "\n";
            } else if (rerank_cmd->parsed()) {
                header.add("candidates", candidates_path);
                const auto candidates = qtind::load_candidates(candidates_path);
                std::size_t missing = 0;
                const auto lists = qtind::rerank_all(queries, candidates, index, opt, &missing);
                write_run_file(out_path, lists, tag);
                header.print(std::cout);
                std::cout << "queries\t" << lists.size() << "\n"
                          << "candidate_sets_without_query\t" << missing << "\n";
            } else {
                std::optional<qtind::ImpactIndex> stage2;
                if (!stage2_path.empty()) stage2 = qtind::read_index(stage2_path);
                std::optional<qtind::Qrels> qrels;
                if (!qrels_path.empty()) qrels = qtind::load_qrels(qrels_path);
                header.add("stage2", stage2_path.empty() ? std::string("(identity)") : stage2_path);
                header.add("k1", k1_depth);
                header.add("pruned", pruned);
                const auto result = qtind::run_telescope(queries, index, stage2 ? &*stage2 : nullptr, k1_depth, opt);
                const auto final_tag = common.tag.empty() && stage2 ? tag + "+" + default_tag(*stage2, common.mode())
                                                                    : tag;
                write_run_file(out_path, result.final_run, final_tag);
                header.print(std::cout);
                std::cout << "queries\t" << result.final_run.size() << "\n";
                if (qrels) {
                    const auto stage1_run = qtind::to_run(result.stage1);
                    const auto recall = qtind::recall_at_k(stage1_run, *qrels, k1_depth);
                    const auto mrr = qtind::mrr_at_k(qtind::to_run(result.final_run), *qrels, 10);
                    std::cout << "stage1_recall@" << k1_depth << "\t" << std::setprecision(6) << recall.mean << "\n"
                              << "final_mrr@10\t" << mrr.mean << "\n"
                              << "judged_queries\t" << recall.query_count << "\n";
                }
            }
            return 0;
        }

        if (eval_cmd->parsed()) {
            const auto metric = parse_metric(metric_text);
            const auto run = qtind::load_run(run_path);
            const auto qrels = qtind::load_qrels(qrels_path);
            const auto report = compute_metric(metric, run, qrels);
            Header header("eval");
            header.add("run", run_path);
            header.add("qrels", qrels_path);
            header.add("metric", report.metric);
            header.print(std::cout);
            std::cout << std::setprecision(6) << report.metric << "\t" << report.mean << "\n"
                      << "queries\t" << report.query_count << "\n"
                      << "run_queries_without_qrels\t" << report.skipped_run_queries << "\n";
            if (!per_query_path.empty()) {
                auto out = open_output(per_query_path);
                out << std::setprecision(10);
                for (const auto& m : report.per_query) out << m.query_id << '\t' << m.value << '\n';
            }
            return 0;
        }

        if (compare_cmd->parsed()) {
            const auto metric = parse_metric(metric_text);
            const auto qrels = qtind::load_qrels(qrels_path);
            const auto a = compute_metric(metric, qtind::load_run(run_path), qrels);
            const auto bb = compute_metric(metric, qtind::load_run(run_b_path), qrels);
            const auto test = qtind::paired_ttest(a.per_query, bb.per_query);
            Header header("compare");
            header.add("run_a", run_path);
            header.add("run_b", run_b_path);
            header.add("qrels", qrels_path);
            header.add("metric", a.metric);
            header.print(std::cout);
            std::cout << std::setprecision(6) << "mean_a\t" << a.mean << "\n"
                      << "mean_b\t" << bb.mean << "\n"
                      << "queries\t" << test.n << "\n"
                      << "t\t" << test.t << "\n"
                      << "p\t" << test.p << "\n";
            return 0;
        }

        if (self_cmd->parsed()) {
            Header header("selfcheck");
            header.add("docs", self.docs);
            header.add("queries", self.queries);
            header.add("seed", self.seed);
            header.add("threads", self.threads);
            header.add("inject_fault", self.inject_fault);
            const auto report = qtind::run_selfcheck(self);
            header.print(std::cout);
            for (const auto& c : report.checks) {
                std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  (" << c.detail << ")\n";
            }
            if (!report.passed()) {
                for (const auto& c : report.checks) {
                    if (!c.passed) std::cerr << "selfcheck failed: " << c.name << ": " << c.detail << "\n";
                }
                return kExitCheck;
            }
            std::cout << "all " << report.checks.size() << " checks passed\n";
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const qtind::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
