#pragma once

#include <certnn/model.hpp>
#include <certnn/proof_tree.hpp>

#include <string>

namespace certnn {

/// Deterministic JSON text of a proof log; rationals as "p/q", tree in
/// pre-order.
std::string emit_proof(const ProofLog & log);

/// Strict parser: rationals must be canonical. Throws ParseError.
ProofLog parse_proof(const std::string & text);

struct ProofVerdict
{
    bool accepted = false;
    std::string path;   // first failing entry, e.g. "root/1/cert0/row3"
    std::string reason;

    explicit operator bool() const { return accepted; }
};

/// Replays every derivation, leaf certificate and split annotation of `log`
/// against `problem`. Uses only the model, proof tree and certificate
/// checkers.
ProofVerdict check_proof(const Problem & problem, const ProofLog & log);

/// Parses and checks; a parse failure is a rejection at path "log".
ProofVerdict check_proof_text(const Problem & problem, const std::string & text);

/// Checks one leaf of the main tree in isolation against `lemmas`.
ProofVerdict check_leaf(const Problem & problem, const ProofNode & leaf, const std::vector<LemmaProof> & lemmas);

} // namespace certnn
