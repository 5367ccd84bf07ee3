#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace nes {

inline constexpr int kApiSchemaVersion = 1;
inline constexpr const char* kSchemaHeader = "X-NES-Schema-Version";

struct ServerOptions {
  /// An index directory, or a directory whose subdirectories are indexes.
  /// Index ids are directory names.
  std::filesystem::path index_dir;
  /// Session snapshots; defaults to `<index_dir>/sessions`.
  std::optional<std::filesystem::path> state_dir;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  /// When set, every request needs `Authorization: Bearer <token>`.
  std::optional<std::string> token;
  std::size_t threads = 4;
};

/// JSON-over-HTTP front end for sessions. Sessions are written to the state
/// directory after every mutation and reloaded on construction.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the listening socket and returns the port.
  int bind();
  /// Serves until stop(); binds first if needed.
  void listen();
  void stop();
  bool running() const;

  std::size_t index_count() const;
  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nes
