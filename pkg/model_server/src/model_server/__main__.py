"""Run the reference server: `python -m model_server` or the console script.

Port comes from XAICLIP_SERVER_PORT (default 8731); dummy-model knobs from
XAICLIP_SERVER_THRESHOLD and XAICLIP_SERVER_SIZE (WxH).
"""

import os

import uvicorn

from .app import create_app


def main():
    port = int(os.environ.get("XAICLIP_SERVER_PORT", "8731"))
    threshold = int(os.environ.get("XAICLIP_SERVER_THRESHOLD", "10"))
    size = os.environ.get("XAICLIP_SERVER_SIZE", "224x224")
    width, height = (int(t) for t in size.lower().split("x"))
    app = create_app(threshold=threshold, input_width=width, input_height=height)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
