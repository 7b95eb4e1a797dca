#include "glosskit/igt.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "glosskit/rng.hpp"

namespace glosskit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Genre
// ---------------------------------------------------------------------------

Genre Genre::parse(const std::string& name) {
    std::string lower;
    lower.reserve(name.size());
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    Genre g;
    if (lower == "story") g.kind = Kind::Story;
    else if (lower == "history") g.kind = Kind::History;
    else if (lower == "personal") g.kind = Kind::Personal;
    else if (lower == "advice") g.kind = Kind::Advice;
    else {
        g.kind = Kind::Other;
        g.other_name = name;
    }
    return g;
}

std::string Genre::str() const {
    switch (kind) {
        case Kind::Story: return "story";
        case Kind::History: return "history";
        case Kind::Personal: return "personal";
        case Kind::Advice: return "advice";
        case Kind::Other: return other_name;
    }
    return other_name;
}

// ---------------------------------------------------------------------------
// Sentence validation
// ---------------------------------------------------------------------------

namespace {

bool clean_token(const std::string& t) {
    if (t.empty()) return false;
    for (char c : t)
        if (std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

} // namespace

void validate_sentence(const IgtSentence& s, long line) {
    if (s.words.empty()) throw malformed_record(line, "sentence has no words");
    if (s.words.size() != s.glosses.size())
        throw misaligned_gloss(line, "word count " + std::to_string(s.words.size()) +
                                         " vs gloss-word count " +
                                         std::to_string(s.glosses.size()));
    for (size_t w = 0; w < s.words.size(); ++w) {
        if (s.words[w].empty()) throw malformed_record(line, "empty word");
        if (s.words[w].size() != s.glosses[w].size())
            throw misaligned_gloss(line, "word " + std::to_string(w) + " has " +
                                             std::to_string(s.words[w].size()) +
                                             " morphemes but " +
                                             std::to_string(s.glosses[w].size()) + " glosses");
        for (const auto& m : s.words[w])
            if (!clean_token(m)) throw malformed_record(line, "empty or whitespace morpheme");
        for (const auto& g : s.glosses[w])
            if (!clean_token(g)) throw malformed_record(line, "empty or whitespace gloss");
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    id_to_morpheme_ = {"<pad>", "<unk>", "<mask>", "<sep>"};
    for (int i = 0; i < static_cast<int>(id_to_morpheme_.size()); ++i)
        morpheme_to_id_[id_to_morpheme_[i]] = i;
    id_to_gloss_ = {"<sep>"};
    gloss_to_id_[id_to_gloss_[0]] = 0;
}

int Vocabulary::add_morpheme(const std::string& m) {
    auto it = morpheme_to_id_.find(m);
    if (it != morpheme_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_morpheme_.size());
    id_to_morpheme_.push_back(m);
    morpheme_to_id_[m] = id;
    return id;
}

int Vocabulary::add_gloss(const std::string& g) {
    auto it = gloss_to_id_.find(g);
    if (it != gloss_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_gloss_.size());
    id_to_gloss_.push_back(g);
    gloss_to_id_[g] = id;
    return id;
}

int Vocabulary::morpheme_id(const std::string& m) const {
    auto it = morpheme_to_id_.find(m);
    return it == morpheme_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::has_morpheme(const std::string& m) const {
    return morpheme_to_id_.count(m) > 0;
}

const std::string& Vocabulary::morpheme(int id) const {
    if (id < 0 || id >= morpheme_count())
        throw id_out_of_range("morpheme id " + std::to_string(id));
    return id_to_morpheme_[static_cast<size_t>(id)];
}

int Vocabulary::gloss_id(const std::string& g) const {
    auto it = gloss_to_id_.find(g);
    return it == gloss_to_id_.end() ? unseen_label_id() : it->second;
}

bool Vocabulary::has_gloss(const std::string& g) const { return gloss_to_id_.count(g) > 0; }

const std::string& Vocabulary::gloss(int id) const {
    static const std::string unseen = "<unseen>";
    if (id == unseen_label_id()) return unseen;
    if (id < 0 || id > gloss_count()) throw id_out_of_range("gloss id " + std::to_string(id));
    return id_to_gloss_[static_cast<size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    };
    for (const auto& m : id_to_morpheme_) mix(m);
    h ^= 0xfe;
    h *= 1099511628211ull;
    for (const auto& g : id_to_gloss_) mix(g);
    return h;
}

void Vocabulary::save(const std::string& path) const {
    json j;
    j["morphemes"] = id_to_morpheme_;
    j["glosses"] = id_to_gloss_;
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write vocabulary to " + path);
    out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Data, "cannot read vocabulary from " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Data, "invalid vocabulary file " + path + ": " + e.what());
    }
    Vocabulary v;
    const auto morphemes = j.at("morphemes").get<std::vector<std::string>>();
    const auto glosses = j.at("glosses").get<std::vector<std::string>>();
    if (morphemes.size() < kFirstMorpheme || morphemes[kPad] != "<pad>" ||
        morphemes[kUnk] != "<unk>" || morphemes[kMask] != "<mask>" ||
        morphemes[kSep] != "<sep>" || glosses.empty() || glosses[kSepLabel] != "<sep>")
        throw Error(ErrorKind::Data, "vocabulary file " + path + " has bad special tokens");
    for (size_t i = kFirstMorpheme; i < morphemes.size(); ++i) v.add_morpheme(morphemes[i]);
    for (size_t i = kFirstGloss; i < glosses.size(); ++i) v.add_gloss(glosses[i]);
    return v;
}

// ---------------------------------------------------------------------------
// JSONL parsing and serialization
// ---------------------------------------------------------------------------

namespace {

IgtSentence sentence_from_json(const json& j, long line) {
    IgtSentence s;
    try {
        s.words = j.at("transcription").get<std::vector<std::vector<std::string>>>();
        s.glosses = j.at("glosses").get<std::vector<std::vector<std::string>>>();
        if (j.contains("translation") && !j["translation"].is_null())
            s.translation = j["translation"].get<std::string>();
        s.genre = Genre::parse(j.at("genre").get<std::string>());
        s.speaker_id = j.value("speaker", "unknown");
        s.doc_id = j.value("doc", "doc0");
    } catch (const json::exception& e) {
        throw malformed_record(line, e.what());
    }
    validate_sentence(s, line);
    return s;
}

std::vector<std::string> split_morphemes(const std::string& word, long line) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : word) {
        if (c == '-') {
            if (cur.empty()) throw malformed_record(line, "empty morpheme in '" + word + "'");
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (cur.empty()) throw malformed_record(line, "empty morpheme in '" + word + "'");
    parts.push_back(cur);
    return parts;
}

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream ss(text);
    std::vector<std::string> words;
    std::string w;
    while (ss >> w) words.push_back(w);
    return words;
}

std::vector<IgtSentence> parse_jsonl(std::istream& in) {
    std::vector<IgtSentence> out;
    std::unordered_map<std::string, int> doc_counters;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw malformed_record(lineno, e.what());
        }
        IgtSentence s = sentence_from_json(j, lineno);
        s.index_in_doc = doc_counters[s.doc_id]++;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<IgtSentence> parse_two_line(std::istream& in) {
    std::vector<IgtSentence> out;
    std::unordered_map<std::string, int> doc_counters;
    Genre genre = Genre::parse("unspecified");
    std::string speaker = "unknown";
    std::string doc = "doc0";

    std::string line;
    long lineno = 0;
    std::vector<std::pair<std::string, long>> pending;

    auto flush = [&] {
        if (pending.empty()) return;
        if (pending.size() == 1)
            throw malformed_record(pending[0].second, "transcription line without gloss line");
        const auto& [surface, surface_line] = pending[0];
        const auto& [gloss_text, gloss_line] = pending[1];
        const auto surface_words = split_words(surface);
        const auto gloss_words = split_words(gloss_text);
        if (surface_words.size() != gloss_words.size())
            throw misaligned_gloss(gloss_line,
                                   std::to_string(surface_words.size()) + " words vs " +
                                       std::to_string(gloss_words.size()) + " gloss words");
        IgtSentence s;
        s.genre = genre;
        s.speaker_id = speaker;
        s.doc_id = doc;
        for (size_t w = 0; w < surface_words.size(); ++w) {
            s.words.push_back(split_morphemes(surface_words[w], surface_line));
            s.glosses.push_back(split_morphemes(gloss_words[w], gloss_line));
            if (s.words.back().size() != s.glosses.back().size())
                throw misaligned_gloss(gloss_line, "word '" + surface_words[w] + "' has " +
                                                       std::to_string(s.words.back().size()) +
                                                       " morphemes but " +
                                                       std::to_string(s.glosses.back().size()) +
                                                       " glosses");
        }
        validate_sentence(s, surface_line);
        s.index_in_doc = doc_counters[s.doc_id]++;
        out.push_back(std::move(s));
        pending.clear();
    };

    while (std::getline(in, line)) {
        ++lineno;
        // strip trailing CR from CRLF input
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        if (trimmed.empty()) {
            flush();
            continue;
        }
        if (trimmed[0] == '#') {
            flush();
            const auto colon = trimmed.find(':');
            if (colon == std::string::npos)
                throw malformed_record(lineno, "directive without ':'");
            std::string key = trimmed.substr(1, colon - 1);
            std::string value = trimmed.substr(colon + 1);
            auto strip = [](std::string& s) {
                s.erase(0, s.find_first_not_of(" \t"));
                s.erase(s.find_last_not_of(" \t") + 1);
            };
            strip(key);
            strip(value);
            if (key == "genre") genre = Genre::parse(value);
            else if (key == "speaker") speaker = value;
            else if (key == "doc") doc = value;
            else throw malformed_record(lineno, "unknown directive '" + key + "'");
            continue;
        }
        if (pending.size() == 2)
            throw malformed_record(lineno, "expected blank line between sentences");
        pending.emplace_back(trimmed, lineno);
    }
    flush();
    return out;
}

} // namespace

std::vector<IgtSentence> parse_corpus(std::istream& in, CorpusFormat format) {
    return format == CorpusFormat::Jsonl ? parse_jsonl(in) : parse_two_line(in);
}

std::vector<IgtSentence> load_corpus(const std::string& path, CorpusFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Data, "cannot open corpus file " + path);
    return parse_corpus(in, format);
}

std::string serialize_sentence(const IgtSentence& s) {
    json j;
    j["transcription"] = s.words;
    j["glosses"] = s.glosses;
    if (s.translation) j["translation"] = *s.translation;
    j["genre"] = s.genre.str();
    j["speaker"] = s.speaker_id;
    j["doc"] = s.doc_id;
    return j.dump();
}

void serialize_corpus(const std::vector<IgtSentence>& corpus, std::ostream& out) {
    for (const auto& s : corpus) out << serialize_sentence(s) << "\n";
}

void save_corpus(const std::vector<IgtSentence>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write corpus to " + path);
    serialize_corpus(corpus, out);
}

// ---------------------------------------------------------------------------
// Vocabulary construction and task encoding
// ---------------------------------------------------------------------------

Vocabulary build_vocab(const std::vector<IgtSentence>& train) {
    if (train.empty()) throw empty_corpus("build_vocab requires a non-empty training split");
    Vocabulary v;
    for (const auto& s : train)
        for (size_t w = 0; w < s.words.size(); ++w) {
            for (const auto& m : s.words[w]) v.add_morpheme(m);
            for (const auto& g : s.glosses[w]) v.add_gloss(g);
        }
    return v;
}

EncodedSentence to_task_sequence(const IgtSentence& s, const Vocabulary& v) {
    EncodedSentence e;
    e.source = &s;
    const int total = s.morpheme_count() + static_cast<int>(s.words.size()) - 1;
    if (total > kMaxSequencePositions)
        throw sequence_too_long("sentence in doc '" + s.doc_id + "' has " +
                                std::to_string(total) + " positions, max " +
                                std::to_string(kMaxSequencePositions));
    e.input_ids.reserve(total);
    e.label_ids.reserve(total);
    e.oov_mask.reserve(total);
    for (size_t w = 0; w < s.words.size(); ++w) {
        if (w > 0) {
            e.input_ids.push_back(Vocabulary::kSep);
            e.label_ids.push_back(Vocabulary::kSepLabel);
            e.oov_mask.push_back(false);
        }
        for (size_t m = 0; m < s.words[w].size(); ++m) {
            const bool known = v.has_morpheme(s.words[w][m]);
            e.input_ids.push_back(known ? v.morpheme_id(s.words[w][m]) : Vocabulary::kUnk);
            e.oov_mask.push_back(!known);
            e.label_ids.push_back(v.gloss_id(s.glosses[w][m]));
        }
    }
    return e;
}

std::vector<EncodedSentence> encode_corpus(const std::vector<IgtSentence>& corpus,
                                           const Vocabulary& v) {
    std::vector<EncodedSentence> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) out.push_back(to_task_sequence(s, v));
    return out;
}

std::vector<std::string> decode_input(const EncodedSentence& e, const Vocabulary& v) {
    std::vector<std::string> out;
    out.reserve(e.input_ids.size());
    for (int id : e.input_ids) out.push_back(v.morpheme(id));
    return out;
}

// ---------------------------------------------------------------------------
// Genre-based splitting
// ---------------------------------------------------------------------------

namespace {

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

// Splits `pool` (indices into corpus) into a `first_count`-sized part and the
// rest. DocumentRandom keeps whole documents together, cutting at the first
// document boundary at or past the target.
std::pair<std::vector<size_t>, std::vector<size_t>> random_partition(
    const std::vector<IgtSentence>& corpus, std::vector<size_t> pool, long first_count,
    Rng& rng, SplitPolicy policy) {
    std::vector<size_t> first, second;
    if (policy == SplitPolicy::SentenceRandom) {
        shuffle_indices(pool, rng);
        for (size_t i = 0; i < pool.size(); ++i)
            (static_cast<long>(i) < first_count ? first : second).push_back(pool[i]);
    } else {
        std::vector<std::string> doc_order;
        std::unordered_map<std::string, std::vector<size_t>> docs;
        for (size_t i : pool) {
            const auto& d = corpus[i].doc_id;
            if (!docs.count(d)) doc_order.push_back(d);
            docs[d].push_back(i);
        }
        std::vector<size_t> doc_idx(doc_order.size());
        for (size_t i = 0; i < doc_idx.size(); ++i) doc_idx[i] = i;
        shuffle_indices(doc_idx, rng);
        long placed = 0;
        for (size_t di : doc_idx) {
            auto& target = (placed < first_count) ? first : second;
            for (size_t i : docs[doc_order[di]]) target.push_back(i);
            if (placed < first_count) placed += static_cast<long>(docs[doc_order[di]].size());
        }
    }
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    return {std::move(first), std::move(second)};
}

std::vector<IgtSentence> gather(const std::vector<IgtSentence>& corpus,
                                const std::vector<size_t>& idx) {
    std::vector<IgtSentence> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(corpus[i]);
    return out;
}

} // namespace

Splits split_by_genre(const std::vector<IgtSentence>& corpus, const std::set<Genre>& id_genres,
                      const std::set<Genre>& ood_genres, double train_frac,
                      double ood_eval_frac, std::uint64_t seed, SplitPolicy policy) {
    if (train_frac <= 0.0 || train_frac >= 1.0 || ood_eval_frac <= 0.0 || ood_eval_frac >= 1.0)
        throw config_error("split ratios must lie in (0, 1)");
    for (const auto& g : id_genres)
        if (ood_genres.count(g))
            throw config_error("genre '" + g.str() + "' assigned to both ID and OOD sides");

    std::vector<size_t> id_pool, ood_pool;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const Genre& g = corpus[i].genre;
        const bool in_id = id_genres.count(g) > 0;
        const bool in_ood = ood_genres.count(g) > 0;
        if (in_id == in_ood) throw unassigned_genre(g.str());
        (in_id ? id_pool : ood_pool).push_back(i);
    }

    Rng rng(seed);
    const long train_count = std::llround(train_frac * static_cast<double>(id_pool.size()));
    auto [train_idx, eval_id_idx] =
        random_partition(corpus, std::move(id_pool), train_count, rng, policy);
    const long ood_eval_count =
        std::llround(ood_eval_frac * static_cast<double>(ood_pool.size()));
    auto [eval_ood_idx, test_ood_idx] =
        random_partition(corpus, std::move(ood_pool), ood_eval_count, rng, policy);

    Splits s;
    s.train = gather(corpus, train_idx);
    s.eval_id = gather(corpus, eval_id_idx);
    s.eval_ood = gather(corpus, eval_ood_idx);
    s.test_ood = gather(corpus, test_ood_idx);
    return s;
}

} // namespace glosskit
