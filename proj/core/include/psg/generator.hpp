#pragma once

#include "psg/scene.hpp"

#include <cstdint>
#include <vector>

namespace psg {

/// Deterministic labeling rule derived from a corpus config. Every annotation
/// the generator emits can be re-derived from these tables, which is what the
/// consistency tests do.
///
/// Each (subject class, object class) cell has a primary predicate drawn from
/// the long-tailed profile. In context mode the effective predicate switches
/// between `primary` and `context_alt` on the parity of the context object's
/// class. A cell flagged ambiguous additionally has a rarer `secondary`
/// predicate that is valid whenever the primary applies; the precedence rule
/// (most frequent usage wins) keeps it out of the annotations.
class LabelRule {
public:
    explicit LabelRule(const CorpusConfig& config);

    std::uint16_t primary(std::uint16_t cs, std::uint16_t co) const;
    std::uint16_t context_alt(std::uint16_t cs, std::uint16_t co) const;
    bool ambiguous(std::uint16_t cs, std::uint16_t co) const;
    std::uint16_t secondary(std::uint16_t cs, std::uint16_t co) const;

    static int context_group(std::uint16_t context_class) { return context_class % 2; }

    std::uint16_t context_predicate(std::uint16_t cs, std::uint16_t co,
                                    std::uint16_t context_class) const {
        return context_group(context_class) == 0 ? primary(cs, co) : context_alt(cs, co);
    }

private:
    std::size_t cell(std::uint16_t cs, std::uint16_t co) const;

    std::size_t classes_;
    std::vector<std::uint16_t> primary_;
    std::vector<std::uint16_t> context_alt_;
    std::vector<std::uint8_t> ambiguous_;
    std::vector<std::uint16_t> secondary_;
};

/// Per-channel signature every object of class `cls` carries inside its mask.
std::vector<double> class_signature(const CorpusConfig& config, std::uint16_t cls);

/// Synthesizes scene `index` of the corpus: disjoint rectangular masks, a
/// feature map with class signatures plus noise, and rule-derived relations.
/// Pure in (config, index); throws GenerationError when the objects cannot be
/// packed into H x W.
Scene generate_scene(const CorpusConfig& config, std::size_t index);

/// All scenes of the corpus, optionally generated in parallel. Output is
/// identical for any thread count.
std::vector<Scene> generate_corpus(const CorpusConfig& config, std::size_t threads = 1);

} // namespace psg
