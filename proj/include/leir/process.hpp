// SPDX-License-Identifier: Apache-2.0
//
// Child process speaking one JSON object per line on stdin/stdout.

#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace leir {

class LineProcess {
  public:
    // Runs `command` through /bin/sh. Throws Error("SpawnFailed").
    explicit LineProcess(const std::string& command,
                         std::chrono::milliseconds timeout = std::chrono::seconds(60));
    ~LineProcess();
    LineProcess(const LineProcess&) = delete;
    LineProcess& operator=(const LineProcess&) = delete;

    // Sends one line, returns the next reply line without its newline.
    // Throws Error("Timeout") or Error("ProtocolError") on a closed pipe.
    std::string request_line(const std::string& line);
    // Same, with JSON framing. Throws Error("ProtocolError") on malformed replies.
    nlohmann::json request(const nlohmann::json& message);

    const std::string& command() const { return command_; }

  private:
    std::string command_;
    std::chrono::milliseconds timeout_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

}  // namespace leir
