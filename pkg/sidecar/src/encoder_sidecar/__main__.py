"""Run the sidecar: `python -m encoder_sidecar` or `encoder-sidecar`."""

import logging
import os

import uvicorn

from .service import PORT_ENV, create_app


def main():
    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get(PORT_ENV, "8765"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
