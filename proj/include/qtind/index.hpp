// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <zlib.h>

#include "qtind/corpus.hpp"
#include "qtind/error.hpp"
#include "qtind/scoring.hpp"

namespace qtind {

struct Posting {
    DocId doc = 0;
    double impact = 0.0;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// Impact-ordered postings of one term: impact descending, then doc ascending.
class PostingList {
public:
    PostingList() = default;

    /// Sorts `postings` into impact order. Duplicate docs or non-positive
    /// impacts throw BuildError.
    PostingList(std::string term, std::vector<Posting> postings)
        : term_(std::move(term)), postings_(std::move(postings)) {
        std::sort(postings_.begin(), postings_.end(), impact_order);
        if (auto violation = check()) throw BuildError(*violation);
        index_docs();
    }

    /// Takes postings in the given order without sorting or validating.
    /// Used by fault injection and the reader, which validates separately.
    static PostingList from_raw(std::string term, std::vector<Posting> postings) {
        PostingList list;
        list.term_ = std::move(term);
        list.postings_ = std::move(postings);
        list.index_docs();
        return list;
    }

    static bool impact_order(const Posting& a, const Posting& b) {
        if (a.impact != b.impact) return a.impact > b.impact;
        return a.doc < b.doc;
    }

    const std::string& term() const noexcept { return term_; }
    std::span<const Posting> postings() const noexcept { return postings_; }
    std::size_t size() const noexcept { return postings_.size(); }
    bool empty() const noexcept { return postings_.empty(); }
    double max_impact() const noexcept { return postings_.empty() ? 0.0 : postings_.front().impact; }

    /// Position of `doc` in impact order, if present.
    std::optional<std::size_t> position(DocId doc) const {
        auto it = std::lower_bound(by_doc_.begin(), by_doc_.end(), doc,
                                   [this](std::uint32_t pos, DocId d) { return postings_[pos].doc < d; });
        if (it == by_doc_.end() || postings_[*it].doc != doc) return std::nullopt;
        return *it;
    }

    /// Stored impact of `doc`, 0 when absent.
    double impact(DocId doc) const {
        auto pos = position(doc);
        return pos ? postings_[*pos].impact : 0.0;
    }

    /// First broken invariant, if any.
    std::optional<std::string> check() const {
        for (std::size_t i = 0; i < postings_.size(); ++i) {
            const auto& p = postings_[i];
            if (!(p.impact > 0.0) || !std::isfinite(p.impact)) {
                return "posting-order: term '" + term_ + "' has non-positive impact at " +
                       std::to_string(i);
            }
            if (i > 0 && !impact_order(postings_[i - 1], p)) {
                return "posting-order: term '" + term_ + "' out of impact order at " +
                       std::to_string(i);
            }
        }
        std::vector<DocId> docs;
        docs.reserve(postings_.size());
        for (const auto& p : postings_) docs.push_back(p.doc);
        std::sort(docs.begin(), docs.end());
        if (std::adjacent_find(docs.begin(), docs.end()) != docs.end()) {
            return "posting-order: term '" + term_ + "' has duplicate doc ids";
        }
        return std::nullopt;
    }

    friend bool operator==(const PostingList& a, const PostingList& b) {
        return a.term_ == b.term_ && a.postings_ == b.postings_;
    }

private:
    void index_docs() {
        by_doc_.resize(postings_.size());
        std::iota(by_doc_.begin(), by_doc_.end(), 0u);
        std::sort(by_doc_.begin(), by_doc_.end(), [this](std::uint32_t a, std::uint32_t b) {
            return postings_[a].doc < postings_[b].doc;
        });
    }

    std::string term_;
    std::vector<Posting> postings_;
    std::vector<std::uint32_t> by_doc_;
};

/// Which (term, doc) pairs get precomputed.
struct BuildConstraints {
    bool require_term_in_doc = true;
    double df_cap_fraction = 0.05;

    void validate() const {
        if (!(df_cap_fraction > 0.0 && df_cap_fraction <= 1.0)) {
            throw ContractViolation("df_cap_fraction must be in (0,1]");
        }
    }

    /// Largest document frequency a term may have and keep its list:
    /// ceil(df_cap_fraction * doc_count). Products within 1e-9 of an integer
    /// count as that integer so 0.05 * 100 is 5, not 6.
    std::uint64_t df_limit(std::uint64_t doc_count) const {
        const double x = df_cap_fraction * static_cast<double>(doc_count);
        const double r = std::round(x);
        if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::uint64_t>(r);
        return static_cast<std::uint64_t>(std::ceil(x));
    }

    friend bool operator==(const BuildConstraints&, const BuildConstraints&) = default;
};

struct IndexOptions {
    /// 16-bit linear quantization of each list over [0, max_impact].
    bool quantize = false;
};

struct BuildStats {
    std::size_t capped_terms = 0;
    std::size_t zero_impacts = 0;
    std::size_t discarded_not_in_doc = 0;
    std::size_t postings = 0;
};

inline constexpr double kQuantLevels = 65535.0;

inline std::uint16_t quantize_impact(double impact, double max_impact) {
    auto q = static_cast<long>(std::lround(impact / max_impact * kQuantLevels));
    return static_cast<std::uint16_t>(std::clamp(q, 1L, 65535L));
}

inline double dequantize_impact(std::uint16_t q, double max_impact) {
    return max_impact * (static_cast<double>(q) / kQuantLevels);
}

class ImpactIndex {
public:
    using ListMap = std::map<std::string, PostingList, std::less<>>;

    ImpactIndex() = default;
    ImpactIndex(ListMap lists, std::uint64_t doc_count, BuildConstraints constraints,
                bool quantized, std::string scorer_name)
        : lists_(std::move(lists)),
          doc_count_(doc_count),
          constraints_(constraints),
          quantized_(quantized),
          scorer_name_(std::move(scorer_name)) {}

    const PostingList* find(std::string_view term) const {
        auto it = lists_.find(term);
        return it == lists_.end() ? nullptr : &it->second;
    }

    /// Stored impact for (term, doc); 0 when either is absent.
    double impact(std::string_view term, DocId doc) const {
        const auto* list = find(term);
        return list ? list->impact(doc) : 0.0;
    }

    const ListMap& lists() const noexcept { return lists_; }
    std::uint64_t doc_count() const noexcept { return doc_count_; }
    const BuildConstraints& constraints() const noexcept { return constraints_; }
    bool quantized() const noexcept { return quantized_; }
    const std::string& scorer_name() const noexcept { return scorer_name_; }

    std::size_t posting_count() const {
        std::size_t n = 0;
        for (const auto& [_, list] : lists_) n += list.size();
        return n;
    }

    /// Replaces one list verbatim. Exists for fault-injection checks; a
    /// loaded index is otherwise never mutated.
    void replace_list(PostingList list) {
        auto term = list.term();
        lists_.insert_or_assign(std::move(term), std::move(list));
    }

    /// Every broken structural invariant.
    std::vector<std::string> check() const {
        std::vector<std::string> violations;
        for (const auto& [term, list] : lists_) {
            if (term != list.term()) violations.push_back("dictionary: key '" + term + "' mismatch");
            if (list.empty()) violations.push_back("dictionary: empty list for '" + term + "'");
            if (auto v = list.check()) violations.push_back(*v);
            for (const auto& p : list.postings()) {
                if (p.doc >= doc_count_) {
                    violations.push_back("doc-range: term '" + term + "' references doc " +
                                         std::to_string(p.doc));
                    break;
                }
            }
        }
        return violations;
    }

    friend bool operator==(const ImpactIndex& a, const ImpactIndex& b) {
        return a.doc_count_ == b.doc_count_ && a.constraints_ == b.constraints_ &&
               a.quantized_ == b.quantized_ && a.scorer_name_ == b.scorer_name_ &&
               a.lists_ == b.lists_;
    }

private:
    ListMap lists_;
    std::uint64_t doc_count_ = 0;
    BuildConstraints constraints_;
    bool quantized_ = false;
    std::string scorer_name_;
};

namespace detail {

inline void require_dense_ids(const Collection& collection) {
    const auto n = collection.doc_count();
    if (n == 0) throw BuildError("cannot index an empty collection");
    for (const auto& doc : collection.documents()) {
        if (doc.id >= n) {
            throw BuildError("doc_id " + std::to_string(doc.id) +
                             " outside [0, doc_count); ids must be dense");
        }
    }
}

inline void apply_quantization(std::vector<Posting>& postings) {
    double max_impact = 0.0;
    for (const auto& p : postings) max_impact = std::max(max_impact, p.impact);
    for (auto& p : postings) p.impact = dequantize_impact(quantize_impact(p.impact, max_impact), max_impact);
}

inline PostingList make_list(std::string term, std::vector<Posting> postings, bool quantize) {
    if (quantize) apply_quantization(postings);
    return PostingList(std::move(term), std::move(postings));
}

// term id -> (doc, tf) in collection order.
inline std::vector<std::vector<std::pair<DocId, std::uint32_t>>> invert(const Collection& collection) {
    std::vector<std::vector<std::pair<DocId, std::uint32_t>>> inverted(collection.vocabulary().size());
    std::vector<TermId> sorted;
    for (const auto& doc : collection.documents()) {
        sorted.assign(doc.terms.begin(), doc.terms.end());
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
            inverted[sorted[i]].emplace_back(doc.id, static_cast<std::uint32_t>(j - i));
            i = j;
        }
    }
    return inverted;
}

}  // namespace detail

/// Precomputes scorer(t, d) for every admissible pair and stores the positive
/// ones in impact-ordered lists. A term whose document frequency exceeds
/// constraints.df_limit(N) gets no list.
template <ImpactScorer Scorer>
ImpactIndex build_index(const Collection& collection, const Scorer& scorer,
                        const BuildConstraints& constraints = {}, const IndexOptions& options = {},
                        BuildStats* stats = nullptr) {
    constraints.validate();
    detail::require_dense_ids(collection);
    BuildStats local;
    const auto limit = constraints.df_limit(collection.doc_count());
    const auto inverted = detail::invert(collection);
    const auto& vocab = collection.vocabulary();

    auto score = [&](const std::string& term, const Document& doc, std::uint64_t tf,
                     std::uint64_t df) -> double {
        try {
            return scorer(PairContext{term, doc, tf, df, collection}).value();
        } catch (const std::exception& e) {
            throw BuildError("scorer failed on (" + term + ", " + std::to_string(doc.id) +
                             "): " + e.what());
        }
    };

    ImpactIndex::ListMap lists;
    for (TermId t = 0; t < inverted.size(); ++t) {
        const auto& occurrences = inverted[t];
        const std::uint64_t df = occurrences.size();
        if (df > limit) {
            ++local.capped_terms;
            continue;
        }
        const auto& term = vocab.term(t);
        std::vector<Posting> postings;
        auto keep = [&](DocId doc, double impact) {
            if (impact > 0.0) {
                postings.push_back({doc, impact});
            } else {
                ++local.zero_impacts;
            }
        };
        if (constraints.require_term_in_doc) {
            for (const auto& [doc_id, tf] : occurrences) keep(doc_id, score(term, *collection.find(doc_id), tf, df));
        } else {
            std::size_t next = 0;  // occurrences are in collection order
            for (const auto& doc : collection.documents()) {
                std::uint64_t tf = 0;
                if (next < occurrences.size() && occurrences[next].first == doc.id) tf = occurrences[next++].second;
                keep(doc.id, score(term, doc, tf, df));
            }
        }
        if (postings.empty()) continue;
        local.postings += postings.size();
        lists.emplace(term, detail::make_list(term, std::move(postings), options.quantize));
    }
    if (stats) *stats = local;
    return ImpactIndex(std::move(lists), collection.doc_count(), constraints, options.quantize,
                       scorer.name());
}

/// Builds an index from externally precomputed scores. Entries are clamped;
/// with require_term_in_doc, pairs whose term does not occur in the document
/// are discarded and counted in stats.discarded_not_in_doc.
inline ImpactIndex index_from_table(const Collection& collection, const ScoreTable& table,
                                    const BuildConstraints& constraints = {},
                                    const IndexOptions& options = {}, BuildStats* stats = nullptr) {
    constraints.validate();
    detail::require_dense_ids(collection);
    BuildStats local;
    const auto limit = constraints.df_limit(collection.doc_count());
    const auto& vocab = collection.vocabulary();
    std::vector<std::uint64_t> df(vocab.size(), 0);
    {
        const auto inverted = detail::invert(collection);
        for (std::size_t t = 0; t < inverted.size(); ++t) df[t] = inverted[t].size();
    }

    ImpactIndex::ListMap lists;
    for (const auto& [term, row] : table.entries()) {
        const auto term_id = vocab.find(term);
        const std::uint64_t term_df = term_id ? df[*term_id] : 0;
        for (const auto& [doc_id, raw] : row) {
            if (!collection.find(doc_id)) {
                throw BuildError("score table references doc_id " + std::to_string(doc_id) +
                                 " absent from the collection (term '" + term + "')");
            }
        }
        if (term_df > limit) {
            ++local.capped_terms;
            continue;
        }
        std::vector<Posting> postings;
        for (const auto& [doc_id, raw] : row) {
            if (constraints.require_term_in_doc) {
                const auto& terms = collection.find(doc_id)->terms;
                if (!term_id || std::find(terms.begin(), terms.end(), *term_id) == terms.end()) {
                    ++local.discarded_not_in_doc;
                    continue;
                }
            }
            double impact = 0.0;
            try {
                impact = clamp_impact(raw).value();
            } catch (const ContractViolation&) {
                throw BuildError("non-finite score for (" + term + ", " + std::to_string(doc_id) + ")");
            }
            if (impact > 0.0) {
                postings.push_back({doc_id, impact});
            } else {
                ++local.zero_impacts;
            }
        }
        if (postings.empty()) continue;
        local.postings += postings.size();
        lists.emplace(term, detail::make_list(term, std::move(postings), options.quantize));
    }
    if (stats) *stats = local;
    return ImpactIndex(std::move(lists), collection.doc_count(), constraints, options.quantize,
                       "table");
}

// ---------------------------------------------------------------------------
// Binary format, version 1. All integers little-endian; see docs/index-format.md.
//
//   magic        8 bytes  "QTINDIDX"
//   version      u32
//   payload_len  u64
//   payload      payload_len bytes
//   crc32        u32      zlib crc32 of payload
//
// payload: u8 require_term_in_doc, u8 quantized, f64 df_cap_fraction,
//          u64 doc_count, str scorer_name, u64 list_count, then per list:
//          str term, f64 max_impact, u64 n, n x (u32 doc, f64 impact | u16 q)
// str = u32 length + bytes.
// ---------------------------------------------------------------------------

inline constexpr char kIndexMagic[8] = {'Q', 'T', 'I', 'N', 'D', 'I', 'D', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

class IndexFileError : public Error {
public:
    enum class Kind { NotIndexFile, VersionMismatch, Truncated, ChecksumMismatch, Corrupt, Io };

    IndexFileError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        bytes_.append(reinterpret_cast<const char*>(bits.data()), bits.size());
    }
    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes_.append(s);
    }
    const std::string& bytes() const noexcept { return bytes_; }

private:
    std::string bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::array<unsigned char, sizeof(T)> bits;
        std::memcpy(bits.data(), bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }
    std::string get_string() {
        auto n = get<std::uint32_t>();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw IndexFileError(IndexFileError::Kind::Corrupt, "index payload ends mid-record");
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (!bytes.empty()) {
        auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
        crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), n);
        bytes.remove_prefix(n);
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serializes `index` to its version-1 byte image. Identical indexes give
/// identical bytes.
inline std::string serialize_index(const ImpactIndex& index) {
    detail::ByteWriter payload;
    payload.put<std::uint8_t>(index.constraints().require_term_in_doc ? 1 : 0);
    payload.put<std::uint8_t>(index.quantized() ? 1 : 0);
    payload.put<double>(index.constraints().df_cap_fraction);
    payload.put<std::uint64_t>(index.doc_count());
    payload.put_string(index.scorer_name());
    payload.put<std::uint64_t>(index.lists().size());
    for (const auto& [term, list] : index.lists()) {
        payload.put_string(term);
        payload.put<double>(list.max_impact());
        payload.put<std::uint64_t>(list.size());
        for (const auto& p : list.postings()) {
            payload.put<std::uint32_t>(p.doc);
            if (index.quantized()) {
                payload.put<std::uint16_t>(quantize_impact(p.impact, list.max_impact()));
            } else {
                payload.put<double>(p.impact);
            }
        }
    }
    detail::ByteWriter file;
    for (char c : kIndexMagic) file.put<char>(c);
    file.put<std::uint32_t>(kIndexVersion);
    file.put<std::uint64_t>(payload.bytes().size());
    std::string out = file.bytes();
    out += payload.bytes();
    detail::ByteWriter trailer;
    trailer.put<std::uint32_t>(detail::crc32_of(payload.bytes()));
    out += trailer.bytes();
    return out;
}

/// Parses a version-1 byte image. Throws IndexFileError with a distinct kind
/// for bad magic, version mismatch, truncation, checksum failure, and
/// structurally invalid payloads.
inline ImpactIndex deserialize_index(std::string_view bytes) {
    using Kind = IndexFileError::Kind;
    constexpr std::size_t header = sizeof(kIndexMagic) + 4 + 8;
    if (bytes.size() < sizeof(kIndexMagic) ||
        std::memcmp(bytes.data(), kIndexMagic, sizeof(kIndexMagic)) != 0) {
        throw IndexFileError(Kind::NotIndexFile, "not an index file (bad magic bytes)");
    }
    if (bytes.size() < header) throw IndexFileError(Kind::Truncated, "index file truncated in header");
    detail::ByteReader head(bytes.substr(sizeof(kIndexMagic), 12));
    const auto version = head.get<std::uint32_t>();
    if (version != kIndexVersion) {
        throw IndexFileError(Kind::VersionMismatch, "index format version " + std::to_string(version) +
                                                        ", expected " + std::to_string(kIndexVersion));
    }
    const auto payload_len = head.get<std::uint64_t>();
    if (bytes.size() - header < payload_len || bytes.size() - header - payload_len < 4) {
        throw IndexFileError(Kind::Truncated, "index file truncated");
    }
    if (bytes.size() - header - payload_len != 4) {
        throw IndexFileError(Kind::Corrupt, "trailing bytes after index checksum");
    }
    const auto payload = bytes.substr(header, payload_len);
    detail::ByteReader trailer(bytes.substr(header + payload_len));
    if (trailer.get<std::uint32_t>() != detail::crc32_of(payload)) {
        throw IndexFileError(Kind::ChecksumMismatch, "index checksum mismatch");
    }

    detail::ByteReader in(payload);
    BuildConstraints constraints;
    constraints.require_term_in_doc = in.get<std::uint8_t>() != 0;
    const bool quantized = in.get<std::uint8_t>() != 0;
    constraints.df_cap_fraction = in.get<double>();
    const auto doc_count = in.get<std::uint64_t>();
    auto scorer_name = in.get_string();
    const auto list_count = in.get<std::uint64_t>();
    ImpactIndex::ListMap lists;
    for (std::uint64_t i = 0; i < list_count; ++i) {
        auto term = in.get_string();
        const auto max_impact = in.get<double>();
        const auto n = in.get<std::uint64_t>();
        if (n > payload.size()) throw IndexFileError(Kind::Corrupt, "implausible posting count");
        std::vector<Posting> postings;
        postings.reserve(n);
        for (std::uint64_t j = 0; j < n; ++j) {
            Posting p;
            p.doc = in.get<std::uint32_t>();
            p.impact = quantized ? dequantize_impact(in.get<std::uint16_t>(), max_impact) : in.get<double>();
            postings.push_back(p);
        }
        // Dequantization can turn distinct impacts into ties; restore doc order within ties.
        if (quantized) std::stable_sort(postings.begin(), postings.end(), PostingList::impact_order);
        auto list = PostingList::from_raw(term, std::move(postings));
        if (list.max_impact() != max_impact) {
            throw IndexFileError(Kind::Corrupt, "max_impact mismatch for term '" + term + "'");
        }
        if (!lists.emplace(term, std::move(list)).second) {
            throw IndexFileError(Kind::Corrupt, "duplicate term '" + term + "'");
        }
    }
    if (!in.done()) throw IndexFileError(Kind::Corrupt, "unparsed bytes in index payload");
    ImpactIndex index(std::move(lists), doc_count, constraints, quantized, std::move(scorer_name));
    if (auto violations = index.check(); !violations.empty()) {
        throw IndexFileError(Kind::Corrupt, "invalid index: " + violations.front());
    }
    return index;
}

inline void write_index(const ImpactIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IndexFileError(IndexFileError::Kind::Io, "cannot open " + path + " for writing");
    const auto bytes = serialize_index(index);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IndexFileError(IndexFileError::Kind::Io, "write failed: " + path);
}

inline ImpactIndex read_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IndexFileError(IndexFileError::Kind::Io, "cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_index(bytes);
}

}  // namespace qtind
