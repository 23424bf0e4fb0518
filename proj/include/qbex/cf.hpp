#pragma once

// Item similarity and relevance sets derived from implicit-feedback
// collaborative-filter data (user x item interaction counts).

#include "qbex/common.hpp"
#include "qbex/io.hpp"
#include "qbex/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qbex::cf {

/// Sparse users x items count matrix.
class CFMatrix {
public:
    using Key = std::pair<Index, Index>;  // (user, item)

    CFMatrix(Index n_users, Index n_items) : n_users_(n_users), n_items_(n_items) {}

    /// Insert one interaction. Throws DataError on out-of-range indices or a
    /// repeated (user, item) key.
    void add(Index user, Index item, std::uint64_t count) {
        require_data(user < n_users_ && item < n_items_, "CF entry index out of bounds");
        const bool inserted = entries_.emplace(Key{user, item}, count).second;
        require_data(inserted, "duplicate CF entry for user " + std::to_string(user) + ", item " +
                                   std::to_string(item));
    }

    std::uint64_t at(Index user, Index item) const {
        const auto it = entries_.find({user, item});
        return it == entries_.end() ? 0 : it->second;
    }

    Index n_users() const { return n_users_; }
    Index n_items() const { return n_items_; }
    const std::map<Key, std::uint64_t>& entries() const { return entries_; }

private:
    Index n_users_;
    Index n_items_;
    std::map<Key, std::uint64_t> entries_;
};

/// Binary CF matrix stored column-wise: for each item, the sorted set of
/// users associated with it.
struct BinaryCFMatrix {
    Index n_users = 0;
    std::vector<IndexList> columns;

    Index n_items() const { return columns.size(); }
};

/// Dense item x item similarity, symmetric with values in [0, 1].
using SimilarityMatrix = MatrixXd;

struct RelevanceSet {
    IndexList positive;  // X+
    IndexList negative;  // X-
};

inline BinaryCFMatrix binarize(const CFMatrix& f, std::uint64_t threshold) {
    require(threshold >= 1, "binarization threshold must be >= 1");
    BinaryCFMatrix b;
    b.n_users = f.n_users();
    b.columns.resize(f.n_items());
    // entries() iterates in (user, item) order, so each column is filled in
    // ascending user order.
    for (const auto& [key, count] : f.entries())
        if (count >= threshold) b.columns[key.second].push_back(key.first);
    return b;
}

namespace detail {

inline std::size_t intersection_size(const IndexList& a, const IndexList& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

inline double jaccard_sets(const IndexList& a, const IndexList& b) {
    const std::size_t inter = intersection_size(a, b);
    const std::size_t uni = a.size() + b.size() - inter;
    // Two empty columns share no users: similarity 0.
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace detail

/// Jaccard index of the user sets of items i and j.
inline double jaccard_similarity(const BinaryCFMatrix& b, Index i, Index j) {
    require_data(i < b.n_items() && j < b.n_items(), "item index out of bounds");
    return detail::jaccard_sets(b.columns[i], b.columns[j]);
}

inline SimilarityMatrix full_similarity(const BinaryCFMatrix& b) {
    const Index n = b.n_items();
    SimilarityMatrix s = SimilarityMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](Index i) {
        for (Index j = i; j < n; ++j) s(i, j) = detail::jaccard_sets(b.columns[i], b.columns[j]);
    });
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < i; ++j) s(i, j) = s(j, i);
    return s;
}

/// The k candidates most similar to q (q itself excluded), in descending
/// similarity with ties broken by ascending index.
inline IndexList top_k_relevant(const SimilarityMatrix& s, Index q, const IndexList& candidates, std::size_t k) {
    require_data(q < static_cast<Index>(s.rows()), "query item out of bounds");
    IndexList pool;
    pool.reserve(candidates.size());
    for (Index c : candidates) {
        require_data(c < static_cast<Index>(s.cols()), "candidate item out of bounds");
        if (c != q) pool.push_back(c);
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    auto better = [&](Index a, Index b) {
        if (s(q, a) != s(q, b)) return s(q, a) > s(q, b);
        return a < b;
    };
    const std::size_t take = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), better);
    pool.resize(take);
    return pool;
}

/// Relevant and irrelevant database songs for one query whose artist is
/// `query_artist`. Songs by relevant artists form X+; all other database
/// songs form X-, except songs by the query's own artist, which appear in
/// neither set.
inline RelevanceSet song_relevance(Index query_artist, const IndexList& relevant_artists,
                                   const IndexList& song_artist, const IndexList& database, Index n_artists) {
    require_data(query_artist < n_artists, "unknown artist for query song");
    std::vector<char> is_relevant(n_artists, 0);
    for (Index a : relevant_artists) {
        require_data(a < n_artists, "unknown artist in relevant set");
        is_relevant[a] = 1;
    }
    RelevanceSet out;
    for (Index song : database) {
        require_data(song < song_artist.size(), "database song has no artist");
        const Index a = song_artist[song];
        require_data(a < n_artists, "unknown artist for song " + std::to_string(song));
        if (a == query_artist) continue;
        (is_relevant[a] ? out.positive : out.negative).push_back(song);
    }
    return out;
}

/// Interaction data read from a `user<TAB>item<TAB>count` file, with string
/// ids mapped to dense indices in first-seen order.
struct CFData {
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    CFMatrix matrix{0, 0};
};

inline std::uint64_t parse_count(const std::string& s) {
    std::uint64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    require_data(ec == std::errc() && ptr == end && !s.empty(), "interaction count is not a non-negative integer: " + s);
    return v;
}

inline CFData read_cf_tsv(const io::fs::path& path) {
    const auto rows = io::read_tsv(path, 3);
    CFData data;
    std::unordered_map<std::string, Index> users;
    std::unordered_map<std::string, Index> items;
    auto intern = [](std::unordered_map<std::string, Index>& table, std::vector<std::string>& ids,
                     const std::string& id) {
        const auto [it, inserted] = table.emplace(id, ids.size());
        if (inserted) ids.push_back(id);
        return it->second;
    };
    std::vector<std::tuple<Index, Index, std::uint64_t>> triples;
    triples.reserve(rows.size());
    for (const auto& row : rows)
        triples.emplace_back(intern(users, data.user_ids, row[0]), intern(items, data.item_ids, row[1]),
                             parse_count(row[2]));
    data.matrix = CFMatrix(data.user_ids.size(), data.item_ids.size());
    for (const auto& [u, i, c] : triples) data.matrix.add(u, i, c);
    return data;
}

/// Restrict CF data to the given item ids (in that order). Items missing from
/// the CF data get an empty column.
inline CFMatrix select_items(const CFData& data, const std::vector<std::string>& item_ids) {
    std::unordered_map<std::string, Index> wanted;
    for (Index i = 0; i < item_ids.size(); ++i) wanted.emplace(item_ids[i], i);
    CFMatrix out(data.matrix.n_users(), item_ids.size());
    for (const auto& [key, count] : data.matrix.entries()) {
        const auto it = wanted.find(data.item_ids[key.second]);
        if (it != wanted.end()) out.add(key.first, it->second, count);
    }
    return out;
}

}  // namespace qbex::cf
