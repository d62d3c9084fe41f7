#!/usr/bin/env python3
"""Line-protocol proposer that answers every request with the reply stored in a file.

usage: replay_proposer.py REPLY_FILE [LOG_FILE]
The reply file holds one JSON object. Requests are appended to LOG_FILE when given.
"""
import json
import sys


def main():
    reply_path = sys.argv[1]
    log_path = sys.argv[2] if len(sys.argv) > 2 else None
    for line in sys.stdin:
        request = json.loads(line)
        if log_path:
            with open(log_path, "a", encoding="utf-8") as log:
                log.write(json.dumps(request) + "\n")
        with open(reply_path, encoding="utf-8") as f:
            reply = f.read().strip()
        sys.stdout.write(reply.replace("\n", " ") + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
