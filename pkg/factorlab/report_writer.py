import hashlib
import json
import logging
import sys

logger = logging.getLogger(__name__)

TOOL_NAME = 'factorlab'


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


class ReportWriter:
    """Handles result emission as CSV tables or JSON documents.

    Every output carries the tool name, the command, the seed (when the
    command has one) and the SHA-256 of each input file.
    """

    def __init__(self, command, inputs=(), seed=None):
        """Collect the audit facts of one command invocation.

        Args:
            command: Sub-command name
            inputs: Paths of the files the command read
            seed: Master seed, or None for unseeded commands
        """
        self.command = command
        self.seed = seed
        self.inputs = {str(path): file_digest(path) for path in inputs}

    def meta(self):
        meta = {'tool': TOOL_NAME, 'command': self.command}
        if self.seed is not None:
            meta['seed'] = self.seed
        meta['inputs'] = dict(self.inputs)
        return meta

    def header_lines(self):
        lines = [f"# tool: {TOOL_NAME}", f"# command: {self.command}"]
        if self.seed is not None:
            lines.append(f"# seed: {self.seed}")
        lines += [f"# input: {path} sha256={digest}" for path, digest in self.inputs.items()]
        return lines

    def render_csv(self, frame):
        """Header comment lines followed by the frame as CSV."""
        body = frame.to_csv(index=False, lineterminator='\n')
        return '\n'.join(self.header_lines()) + '\n' + body

    def render_json(self, document):
        """JSON document with the audit facts under "meta"."""
        return json.dumps({'meta': self.meta(), **document}, indent=2) + '\n'

    def write_csv(self, frame, out=None):
        self._emit(self.render_csv(frame), out)
        logger.info("Wrote %d rows to %s", len(frame), out or 'stdout')

    def write_json(self, document, out=None):
        self._emit(self.render_json(document), out)
        logger.info("Wrote %s report to %s", self.command, out or 'stdout')

    def _emit(self, text, out):
        if out is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        with open(out, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
