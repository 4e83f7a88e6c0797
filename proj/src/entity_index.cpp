#include "cfr/entity_index.hpp"

#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "binary_io.hpp"
#include "cfr/error.hpp"

namespace cfr {

namespace {

// Unicode White_Space plus the C0 separators U+001C..U+001F, i.e. exactly
// the set Python's str.split() breaks on.
bool is_separator(UChar32 c) {
  return (c >= 0x1C && c <= 0x1F) || u_hasBinaryProperty(c, UCHAR_WHITE_SPACE);
}

void sort_postings(EntityPostings& postings) {
  std::stable_sort(postings.begin(), postings.end(),
                   [](const ScoredId& a, const ScoredId& b) {
                     return ranks_before(a, b);
                   });
}

void check_store(const EmbeddingStore& store) {
  if (store.empty()) {
    throw Error(ErrorCode::kEmptyStore, "cannot rank entities against an empty cache");
  }
}

void check_dimensions(std::span<const EntityEmbedding> entities,
                      const EmbeddingStore& store) {
  for (const auto& e : entities) {
    if (e.vector.size() != store.dimension()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "entity '" + e.key.text() + "' has " +
                      std::to_string(e.vector.size()) +
                      " components, cache dimension is " +
                      std::to_string(store.dimension()));
    }
  }
}

// Computes postings for every entity in `todo`, spreading entities across
// threads. Output slot i belongs to todo[i].
std::vector<EntityPostings> compute_all(const std::vector<const EntityEmbedding*>& todo,
                                        const EmbeddingStore& store,
                                        std::uint32_t k_build, ScanOptions options) {
  std::vector<EntityPostings> out(todo.size());
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(resolve_threads(options.threads), todo.size()));
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < todo.size(); i += stride) {
      out[i] = compute_postings(todo[i]->vector, store, k_build);
    }
  };
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }
  return out;
}

// Last occurrence of each key, in first-seen order.
std::vector<const EntityEmbedding*> dedupe_last_wins(
    std::span<const EntityEmbedding> entities, std::size_t& duplicates) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<const EntityEmbedding*> unique;
  duplicates = 0;
  for (const auto& e : entities) {
    auto [it, inserted] = slot.try_emplace(e.key.text(), unique.size());
    if (inserted) {
      unique.push_back(&e);
    } else {
      unique[it->second] = &e;
      ++duplicates;
    }
  }
  return unique;
}

}  // namespace

std::string normalize_entity_text(std::string_view raw) {
  icu::UnicodeString folded = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  folded.foldCase(U_FOLD_CASE_DEFAULT);

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < folded.length();) {
    const UChar32 c = folded.char32At(i);
    i += U16_LENGTH(c);
    if (is_separator(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar>(u' '));
      pending_space = false;
    }
    collapsed.append(c);
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

EntityKey EntityKey::normalize(std::string_view raw) {
  auto key = try_normalize(raw);
  if (!key) {
    throw Error(ErrorCode::kEmptyAfterNormalization,
                "'" + std::string(raw) + "'");
  }
  return *std::move(key);
}

std::optional<EntityKey> EntityKey::try_normalize(std::string_view raw) {
  std::string text = normalize_entity_text(raw);
  if (text.empty()) return std::nullopt;
  return EntityKey(std::move(text));
}

EntityIndex::EntityIndex(std::uint64_t store_fingerprint, std::uint32_t k_build)
    : store_fingerprint_(store_fingerprint), k_build_(k_build) {
  if (k_build == 0) throw Error(ErrorCode::kInvalidArgument, "k_build must be positive");
}

const EntityPostings* EntityIndex::lookup(const EntityKey& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const EntityPostings* EntityIndex::lookup(std::string_view raw) const {
  const auto key = EntityKey::try_normalize(raw);
  return key ? lookup(*key) : nullptr;
}

void EntityIndex::insert(EntityKey key, EntityPostings postings) {
  if (postings.size() > k_build_) {
    throw Error(ErrorCode::kInvalidArgument,
                "postings for '" + key.text() + "' exceed k_build");
  }
  for (auto& e : postings) {
    if (!std::isfinite(e.score)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "non-finite score in postings for '" + key.text() + "'");
    }
    e.score = static_cast<float>(e.score);
  }
  sort_postings(postings);
  if (!is_valid_ranking(postings)) {
    throw Error(ErrorCode::kInvalidArgument,
                "repeated id in postings for '" + key.text() + "'");
  }
  entries_.insert_or_assign(std::move(key), std::move(postings));
}

EntityPostings compute_postings(std::span<const float> entity_vector,
                                const EmbeddingStore& store, std::uint32_t k_build) {
  EntityPostings postings = top_k_scan(entity_vector, store, k_build);
  for (auto& e : postings) e.score = static_cast<float>(e.score);
  sort_postings(postings);
  return postings;
}

EntityIndex build_entity_index(std::span<const EntityEmbedding> entities,
                               const EmbeddingStore& store, std::uint32_t k_build,
                               IndexBuildReport* report, ScanOptions options) {
  check_store(store);
  EntityIndex index(store.fingerprint(), k_build);
  check_dimensions(entities, store);

  std::size_t duplicates = 0;
  const auto unique = dedupe_last_wins(entities, duplicates);
  auto postings = compute_all(unique, store, k_build, options);
  for (std::size_t i = 0; i < unique.size(); ++i) {
    index.insert(unique[i]->key, std::move(postings[i]));
  }
  if (report) {
    report->entities_scanned = unique.size();
    report->duplicate_keys = duplicates;
    report->existing_keys_skipped = 0;
  }
  return index;
}

EntityIndex extend_index(const EntityIndex& index,
                         std::span<const EntityEmbedding> new_entities,
                         const EmbeddingStore& store, IndexBuildReport* report,
                         ScanOptions options) {
  check_compatible(index, store);
  check_dimensions(new_entities, store);

  std::size_t duplicates = 0;
  auto unique = dedupe_last_wins(new_entities, duplicates);
  const auto before = unique.size();
  std::erase_if(unique, [&](const EntityEmbedding* e) {
    return index.lookup(e->key) != nullptr;
  });
  const std::size_t skipped = before - unique.size();

  EntityIndex extended = index;
  auto postings = compute_all(unique, store, index.k_build(), options);
  for (std::size_t i = 0; i < unique.size(); ++i) {
    extended.insert(unique[i]->key, std::move(postings[i]));
  }
  if (report) {
    report->entities_scanned = unique.size();
    report->duplicate_keys = duplicates;
    report->existing_keys_skipped = skipped;
  }
  return extended;
}

void check_compatible(const EntityIndex& index, const EmbeddingStore& store) {
  if (index.store_fingerprint() != store.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch,
                "index was built against cache " +
                    std::to_string(index.store_fingerprint()) + ", got " +
                    std::to_string(store.fingerprint()));
  }
}

std::uint64_t save_index(const EntityIndex& index, std::ostream& destination) {
  std::string buf;
  buf.append(kIndexMagic);
  detail::put_u32(buf, kIndexFormatVersion);
  detail::put_u64(buf, index.store_fingerprint());
  detail::put_u32(buf, index.k_build());
  detail::put_u64(buf, index.size());
  // std::map over std::string orders keys by unsigned byte value, which is
  // the canonical UTF-8 byte order.
  for (const auto& [key, postings] : index.entries()) {
    detail::put_u32(buf, static_cast<std::uint32_t>(key.text().size()));
    buf.append(key.text());
    detail::put_u32(buf, static_cast<std::uint32_t>(postings.size()));
    for (const auto& e : postings) {
      detail::put_u64(buf, e.id);
      detail::put_f32(buf, static_cast<float>(e.score));
    }
  }
  destination.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!destination) throw Error(ErrorCode::kIoFailure, "index write failed");
  return buf.size();
}

std::uint64_t save_index(const EntityIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  const auto n = save_index(index, out);
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot close " + path.string());
  return n;
}

EntityIndex open_index(std::istream& in) {
  char header[8 + 4 + 8 + 4 + 8];
  in.read(header, kIndexMagic.size());
  if (static_cast<std::size_t>(in.gcount()) != kIndexMagic.size() ||
      std::string_view(header, kIndexMagic.size()) != kIndexMagic) {
    throw Error(ErrorCode::kBadMagic, "not an entity index (expected T2PSEIX1)");
  }
  detail::read_exact(in, header + 8, sizeof header - 8, "header");
  const std::uint32_t version = detail::get_u32(header + 8);
  if (version != kIndexFormatVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, std::to_string(version));
  }
  const std::uint64_t fingerprint = detail::get_u64(header + 12);
  const std::uint32_t k_build = detail::get_u32(header + 20);
  const std::uint64_t count = detail::get_u64(header + 24);
  if (k_build == 0) throw Error(ErrorCode::kInvalidFormat, "k_build 0 in header");

  EntityIndex index(fingerprint, k_build);
  std::string previous;
  char word[12];
  std::string buf;
  for (std::uint64_t n = 0; n < count; ++n) {
    detail::read_exact(in, word, 4, "key length");
    std::string text(detail::get_u32(word), '\0');
    detail::read_exact(in, text.data(), text.size(), "key");
    if (n > 0 && !(previous < text)) {
      throw Error(ErrorCode::kInvalidFormat, "keys not in ascending order at entry " +
                                                 std::to_string(n));
    }
    auto key = EntityKey::try_normalize(text);
    if (!key || key->text() != text) {
      throw Error(ErrorCode::kInvalidFormat, "key '" + text + "' is not normalized");
    }
    detail::read_exact(in, word, 4, "postings length");
    const std::uint32_t length = detail::get_u32(word);
    if (length > k_build) {
      throw Error(ErrorCode::kInvalidFormat, "postings for '" + text + "' exceed k_build");
    }
    buf.resize(std::size_t{length} * 12);
    detail::read_exact(in, buf.data(), buf.size(), "postings");
    EntityPostings postings;
    postings.reserve(length);
    for (std::uint32_t i = 0; i < length; ++i) {
      postings.push_back({detail::get_u64(buf.data() + 12 * i),
                          detail::get_f32(buf.data() + 12 * i + 8)});
    }
    if (!is_valid_ranking(postings)) {
      throw Error(ErrorCode::kInvalidFormat, "postings for '" + text + "' are not a valid ranking");
    }
    previous = text;
    index.insert(*std::move(key), std::move(postings));
  }
  detail::expect_eof(in);
  return index;
}

EntityIndex open_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return open_index(in);
}

}  // namespace cfr
