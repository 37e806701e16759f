#include "tfl/federation.hpp"

namespace tfl::fl {

FederationReport run_federation(agent::Agent& researcher,
                                const std::vector<std::string>& hospital_connection_ids,
                                const ModelParams& initial_model, const Dataset& validation,
                                std::chrono::milliseconds round_timeout) {
    // Gate check before any model bytes leave.
    for (const auto& id : hospital_connection_ids) {
        auto record = researcher.connection(id);
        if (!record || record->state != agent::ConnState::trusted)
            throw agent::UntrustedConnection("connection " + id + " is not trusted");
    }

    FederationReport report;
    ModelParams model = initial_model;
    report.rounds.push_back({0, evaluate(model, validation), model});

    int round = 1;
    for (const auto& id : hospital_connection_ids) {
        researcher.send_model(id, model);
        auto trained = researcher.wait_model(id, round_timeout);
        if (!trained) {
            report.failure = "no model returned on connection " + id;
            return report;
        }
        model = *trained;
        report.rounds.push_back({round, evaluate(model, validation), model});
        ++round;
    }
    report.complete = true;
    return report;
}

}  // namespace tfl::fl
