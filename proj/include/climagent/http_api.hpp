#pragma once

#include <memory>
#include <string>
#include <thread>

#include "climagent/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace climagent::service {

// JSON over HTTP for the console and scripts. Error bodies are
// {"error": <code name>, "message": ...}.
class HttpApi {
public:
    explicit HttpApi(Services& services);
    ~HttpApi();

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port.
    int start(const std::string& host, int port);
    // Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    void routes();

    Services& s_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

// HTTP status for an error code.
int http_status(Errc code);

}  // namespace climagent::service
