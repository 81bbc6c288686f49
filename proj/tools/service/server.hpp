#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace kdsel::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir;
};

// HTTP front end over a Workspace and a JobQueue. Mutating requests that carry
// an X-Request-Id header are answered from a cache on retry.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds the listening socket and returns the port. Throws kdsel::Error when
  // the address is unavailable.
  int bind();
  // Serves until stop(). bind() must have succeeded.
  void run();
  // Stops accepting requests, cancels jobs and flushes the registry.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string service_version();

}  // namespace kdsel::service
