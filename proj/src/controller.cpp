#include "tfl/controller.hpp"

#include <chrono>

#include <httplib.h>

namespace tfl::agent {

struct HttpController::Impl {
    Agent& agent;
    httplib::Server admin;
    httplib::Server webhook;
    std::thread admin_thread;
    std::thread webhook_thread;

    mutable std::mutex mutex;
    std::vector<WebhookEvent> delivered;

    explicit Impl(Agent& a) : agent(a) {}

    void start() {
        const auto& cfg = agent.config();

        admin.Post("/admin", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json request = nlohmann::json::parse(req.body, nullptr, false);
            nlohmann::json response;
            if (request.is_discarded())
                response = {{"error", "CommandFailed"}, {"detail", "request is not JSON"}};
            else
                response = agent.admin_command(request);
            res.set_content(response.dump(), "application/json");
        });

        webhook.Post("/webhook",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         auto body = nlohmann::json::parse(req.body, nullptr, false);
                         if (body.is_discarded() || !body.contains("topic")) {
                             res.status = 400;
                             return;
                         }
                         std::lock_guard lock(mutex);
                         delivered.push_back({body.at("topic").get<std::string>(),
                                              body.value("payload", nlohmann::json())});
                     });

        auto serve = [](httplib::Server& server, const std::string& host, int port) {
            if (!server.bind_to_port(host, port))
                throw AgentError("cannot bind controller port " + std::to_string(port));
            return std::thread([&server] { server.listen_after_bind(); });
        };
        admin_thread = serve(admin, cfg.host, cfg.admin_port);
        webhook_thread = serve(webhook, cfg.host, cfg.webhook_port);
        admin.wait_until_ready();
        webhook.wait_until_ready();

        // The agent pushes events to the controller over HTTP.
        agent.set_webhook_sink([host = cfg.host, port = cfg.webhook_port](
                                   const WebhookEvent& event) {
            httplib::Client client(host, port);
            client.set_connection_timeout(std::chrono::seconds(2));
            nlohmann::json body{{"topic", event.topic}, {"payload", event.payload}};
            client.Post("/webhook", body.dump(), "application/json");
        });
    }

    ~Impl() {
        agent.set_webhook_sink(nullptr);
        admin.stop();
        webhook.stop();
        if (admin_thread.joinable()) admin_thread.join();
        if (webhook_thread.joinable()) webhook_thread.join();
    }
};

HttpController::HttpController(Agent& agent) : impl_(std::make_unique<Impl>(agent)) {
    impl_->start();
}

HttpController::~HttpController() = default;

std::vector<WebhookEvent> HttpController::delivered() const {
    std::lock_guard lock(impl_->mutex);
    return impl_->delivered;
}

}  // namespace tfl::agent
