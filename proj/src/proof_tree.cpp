#include <certnn/proof_tree.hpp>

namespace certnn {

GuardSet guards_of(const PhaseAssignment & alpha)
{
    GuardSet out;
    for (const auto & [unit, phase] : alpha)
        out.insert(GuardLiteral{unit, phase});
    return out;
}

std::string to_string(Justification j)
{
    switch (j) {
    case Justification::Base: return "base";
    case Justification::Dual: return "dual";
    case Justification::Hull: return "hull";
    case Justification::Stable: return "stable";
    case Justification::Lemma: return "lemma";
    }
    return "?";
}

std::size_t ProofNode::leaf_count() const
{
    if (is_leaf())
        return 1;
    std::size_t n = 0;
    for (const auto & c : children)
        n += c.leaf_count();
    return n;
}

std::size_t ProofNode::split_count() const
{
    if (is_leaf())
        return 0;
    std::size_t n = 1;
    for (const auto & c : children)
        n += c.split_count();
    return n;
}

} // namespace certnn
