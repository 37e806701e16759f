#pragma once

#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "tfl/agent.hpp"

namespace tfl::agent {

// HTTP face of the agent/controller split: the admin API listens on
// admin_port (POST /admin, JSON request/response mapped to admin_command) and
// every webhook event is POSTed as JSON to /webhook on webhook_port, where
// the controller records it.
class HttpController {
  public:
    explicit HttpController(Agent& agent);
    ~HttpController();

    HttpController(const HttpController&) = delete;
    HttpController& operator=(const HttpController&) = delete;

    // Events the controller has received over HTTP, in arrival order.
    std::vector<WebhookEvent> delivered() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tfl::agent
