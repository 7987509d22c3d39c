// certnn: verify ReLU safety queries, check proof logs, run the brute-force oracle.
//
// Exit codes: verify/oracle 0 UNSAT, 1 SAT, 2 UNKNOWN, 3 usage or input error,
// 4 oracle cap exceeded; check 0 accept, 1 reject, 3 usage or input error.

#include <certnn/errors.hpp>
#include <certnn/prooflog.hpp>
#include <certnn/search.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace certnn;

namespace {

constexpr int exit_unsat = 0;
constexpr int exit_sat = 1;
constexpr int exit_unknown = 2;
constexpr int exit_input = 3;
constexpr int exit_cap = 4;

std::string read_file(const std::string & path)
{
    std::ifstream in(path, std::ios::binary);
    if (! in)
        throw std::filesystem::filesystem_error("cannot open", path, std::make_error_code(std::errc::no_such_file_or_directory));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string & path, const std::string & text)
{
    std::ofstream out(path, std::ios::binary);
    if (! out)
        throw std::filesystem::filesystem_error("cannot write", path, std::make_error_code(std::errc::permission_denied));
    out << text;
}

std::string join(const std::vector<Rational> & v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + format_rational(v[i]);
    return s;
}

std::string witness_json(const Problem & p, const std::vector<Rational> & x)
{
    const auto trace = forward_eval(p.net, x);
    nlohmann::ordered_json j;
    j["x"] = nlohmann::ordered_json::array();
    for (const auto & q : x)
        j["x"].push_back(format_rational(q));
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto & q : trace.outputs())
        j["outputs"].push_back(format_rational(q));
    j["margin"] = format_rational(p.property.evaluate(trace.outputs()));
    return j.dump(1) + "\n";
}

struct VerifyArgs
{
    std::string problem;
    std::string strategy = "icl";
    std::string emit_proof;
    std::string witness;
    std::size_t max_depth = 64;
    std::uint64_t lp_budget = 0;
    std::uint64_t gate_budget = 512;
    std::size_t workers = 1;
    std::string templates = "default";
};

int cmd_verify(const VerifyArgs & a)
{
    const auto problem = parse_problem(a.problem);
    VerifyConfig config;
    config.strategy = a.strategy == "hsrv" ? Strategy::Hsrv : Strategy::Icl;
    config.max_depth = a.max_depth;
    if (a.lp_budget > 0)
        config.lp_budget = a.lp_budget;
    config.gate_budget = a.gate_budget;
    config.workers = std::max<std::size_t>(a.workers, 1);
    config.templates = a.templates == "margin-only" ? TemplateMode::MarginOnly : TemplateMode::Default;

    const auto result = verify(problem, config);
    std::cout << "verdict=" << to_string(result.verdict) << "\n";
    std::cout << "strategy=" << a.strategy << "\n";
    const auto & c = result.counters;
    std::cout << "splits=" << c.splits << "\n"
              << "lp_calls=" << c.lp_calls << "\n"
              << "gate_invocations=" << c.gate_invocations << "\n"
              << "stabilized_units=" << c.stabilized << "\n"
              << "lemmas_learned=" << c.lemmas << "\n"
              << "clauses_learned=" << c.clauses << "\n";

    switch (result.verdict) {
    case VerifyResult::Verdict::Unsat:
        std::cout << "proof_leaves=" << result.log.root.leaf_count() << "\n";
        if (! a.emit_proof.empty()) {
            write_file(a.emit_proof, emit_proof(result.log));
            std::cout << "proof=" << a.emit_proof << "\n";
        }
        return exit_unsat;
    case VerifyResult::Verdict::Sat:
        std::cout << "witness=" << join(result.witness) << "\n";
        if (! a.witness.empty())
            write_file(a.witness, witness_json(problem, result.witness));
        return exit_sat;
    case VerifyResult::Verdict::Unknown:
        std::cout << "reason=" << result.reason << "\n";
        return exit_unknown;
    }
    return exit_unknown;
}

int cmd_check(const std::string & problem_path, const std::string & proof_path)
{
    const auto problem = parse_problem(problem_path);
    const auto verdict = check_proof_text(problem, read_file(proof_path));
    if (verdict) {
        std::cout << "ACCEPT\n";
        return 0;
    }
    std::cout << "REJECT " << verdict.path << ": " << verdict.reason << "\n";
    return 1;
}

int cmd_oracle(const std::string & problem_path, std::size_t cap)
{
    const auto problem = parse_problem(problem_path);
    const auto r = oracle_verify(problem, cap);
    std::cout << "verdict=" << (r.sat ? "SAT" : "UNSAT") << "\n"
              << "assignments=" << r.assignments << "\n"
              << "lp_calls=" << r.lp_calls << "\n";
    if (r.sat)
        std::cout << "witness=" << join(r.witness) << "\n";
    return r.sat ? exit_sat : exit_unsat;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Certificate-carrying verifier for ReLU networks"};
    app.require_subcommand(1);

    VerifyArgs va;
    auto * verify_cmd = app.add_subcommand("verify", "Decide a safety query");
    verify_cmd->add_option("problem", va.problem, "Problem file")->required();
    verify_cmd->add_option("--strategy", va.strategy, "Search schedule")->check(CLI::IsMember({"icl", "hsrv"}));
    verify_cmd->add_option("--emit-proof", va.emit_proof, "Write the proof log here on UNSAT");
    verify_cmd->add_option("--witness", va.witness, "Write the counterexample here on SAT");
    verify_cmd->add_option("--max-depth", va.max_depth, "Maximum split depth");
    verify_cmd->add_option("--lp-budget", va.lp_budget, "Maximum LP calls (0 = unlimited)");
    verify_cmd->add_option("--gate-budget", va.gate_budget, "LP calls per exactness gate invocation");
    verify_cmd->add_option("--workers", va.workers, "Worker threads");
    verify_cmd->add_option("--templates", va.templates, "Tightening templates")
        ->check(CLI::IsMember({"default", "margin-only"}));

    std::string check_problem, check_proof;
    auto * check_cmd = app.add_subcommand("check", "Check a proof log against a problem");
    check_cmd->add_option("problem", check_problem, "Problem file")->required();
    check_cmd->add_option("proof", check_proof, "Proof log")->required();

    std::string oracle_problem;
    std::size_t cap = 12;
    auto * oracle_cmd = app.add_subcommand("oracle", "Brute-force ground truth over all phase patterns");
    oracle_cmd->add_option("problem", oracle_problem, "Problem file")->required();
    oracle_cmd->add_option("--cap", cap, "Maximum number of unstable units");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError & e) {
        app.exit(e);
        return exit_input;
    }

    try {
        if (*verify_cmd)
            return cmd_verify(va);
        if (*check_cmd)
            return cmd_check(check_problem, check_proof);
        return cmd_oracle(oracle_problem, cap);
    }
    catch (const CapExceeded & e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_cap;
    }
    catch (const Error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_input;
    }
    catch (const std::filesystem::filesystem_error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_input;
    }
}
