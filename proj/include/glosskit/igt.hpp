#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "glosskit/errors.hpp"

namespace glosskit {

// ---------------------------------------------------------------------------
// Genres. Story and History are the usual in-distribution genres; Personal
// and Advice the out-of-distribution ones. Anything else is carried verbatim
// as Other.
// ---------------------------------------------------------------------------
struct Genre {
    enum class Kind { Story, History, Personal, Advice, Other };

    Kind kind = Kind::Other;
    std::string other_name; // set only for Kind::Other

    static Genre parse(const std::string& name);
    std::string str() const;

    bool operator==(const Genre& rhs) const {
        return kind == rhs.kind && (kind != Kind::Other || other_name == rhs.other_name);
    }
    bool operator<(const Genre& rhs) const {
        if (kind != rhs.kind) return kind < rhs.kind;
        return kind == Kind::Other && other_name < rhs.other_name;
    }
};

// One interlinear sentence: words of morphemes with a gloss per morpheme.
struct IgtSentence {
    std::vector<std::vector<std::string>> words;   // surface morphemes per word
    std::vector<std::vector<std::string>> glosses; // aligned 1:1 with words
    std::optional<std::string> translation;
    Genre genre;
    std::string speaker_id;
    std::string doc_id;
    int index_in_doc = 0; // identity within doc_id; see sentence_key()

    int morpheme_count() const {
        int n = 0;
        for (const auto& w : words) n += static_cast<int>(w.size());
        return n;
    }
    // Identity used for split disjointness. Duplicate surface sentences are
    // legitimate in speech corpora, so identity is positional, not textual.
    std::pair<std::string, int> sentence_key() const { return {doc_id, index_in_doc}; }
};

// Validates the alignment and non-empty-string invariants; throws
// MisalignedGloss / MalformedRecord with the given source line on failure.
void validate_sentence(const IgtSentence& s, long line);

// ---------------------------------------------------------------------------
// Vocabulary: bidirectional morpheme<->id and gloss<->id maps. Input-side
// specials occupy fixed ids 0..3; the label side reserves only SEP = 0.
// Gold glosses outside the label map encode to unseen_label_id(), one past
// the last predictable label, so the classifier can never emit it.
// ---------------------------------------------------------------------------
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kMask = 2;
    static constexpr int kSep = 3;
    static constexpr int kFirstMorpheme = 4;

    static constexpr int kSepLabel = 0;
    static constexpr int kFirstGloss = 1;

    Vocabulary();

    int add_morpheme(const std::string& m); // existing id if already present
    int add_gloss(const std::string& g);

    int morpheme_id(const std::string& m) const; // kUnk when absent
    bool has_morpheme(const std::string& m) const;
    const std::string& morpheme(int id) const;

    int gloss_id(const std::string& g) const; // unseen_label_id() when absent
    bool has_gloss(const std::string& g) const;
    const std::string& gloss(int id) const; // "<unseen>" for unseen_label_id()

    int morpheme_count() const { return static_cast<int>(id_to_morpheme_.size()); }
    int gloss_count() const { return static_cast<int>(id_to_gloss_.size()); }
    int unseen_label_id() const { return gloss_count(); }

    std::uint64_t fingerprint() const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::unordered_map<std::string, int> morpheme_to_id_;
    std::vector<std::string> id_to_morpheme_;
    std::unordered_map<std::string, int> gloss_to_id_;
    std::vector<std::string> id_to_gloss_;
};

// Task encoding of one sentence: morpheme ids with SEP at word boundaries,
// aligned label ids, and an OOV flag per position (false at SEP).
struct EncodedSentence {
    std::vector<int> input_ids;
    std::vector<int> label_ids;
    std::vector<bool> oov_mask;
    const IgtSentence* source = nullptr; // non-owning; corpus must outlive it

    int length() const { return static_cast<int>(input_ids.size()); }
};

constexpr int kMaxSequencePositions = 512;
constexpr int kIgnoreIndex = -1;

enum class CorpusFormat { Jsonl, TwoLine };

std::vector<IgtSentence> parse_corpus(std::istream& in, CorpusFormat format);
std::vector<IgtSentence> load_corpus(const std::string& path, CorpusFormat format);

// Canonical JSONL, one sentence per line, LF endings.
std::string serialize_sentence(const IgtSentence& s);
void serialize_corpus(const std::vector<IgtSentence>& corpus, std::ostream& out);
void save_corpus(const std::vector<IgtSentence>& corpus, const std::string& path);

// Vocabulary from the training split only; ids by first occurrence.
Vocabulary build_vocab(const std::vector<IgtSentence>& train);

EncodedSentence to_task_sequence(const IgtSentence& s, const Vocabulary& v);
std::vector<EncodedSentence> encode_corpus(const std::vector<IgtSentence>& corpus,
                                           const Vocabulary& v);

// Surface reconstruction of an encoding; OOV positions come back as "<unk>".
std::vector<std::string> decode_input(const EncodedSentence& e, const Vocabulary& v);

struct Splits {
    std::vector<IgtSentence> train;
    std::vector<IgtSentence> eval_id;
    std::vector<IgtSentence> eval_ood;
    std::vector<IgtSentence> test_ood;
};

enum class SplitPolicy { SentenceRandom, DocumentRandom };

// Partitions by genre, then randomly (per seed) divides the ID side into
// train/eval and the OOD side into eval/test. Every corpus genre must be
// assigned to exactly one side.
Splits split_by_genre(const std::vector<IgtSentence>& corpus, const std::set<Genre>& id_genres,
                      const std::set<Genre>& ood_genres, double train_frac,
                      double ood_eval_frac, std::uint64_t seed,
                      SplitPolicy policy = SplitPolicy::SentenceRandom);

} // namespace glosskit
